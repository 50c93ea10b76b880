/**
 * Copyright 2026 The finreid Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Persistent embedding catalogue: exact k-NN identity matching, k-means
// grouping of encounter images and pairwise consistency checks.
//
// Store file layout (little-endian):
//   offset 0   8 bytes  magic "FRSTORE\0"
//          8   u32      format version (1)
//         12   u32      embedding dimension D
//         16   u64      model fingerprint
//         24   u64      entry count N
//         32   N entries of 144 + 8 * D bytes:
//                64 bytes image_id, 64 bytes identity_id, 16 bytes date
//                (zero padded), D float64 embedding values
//   end - 8    u64      FNV-1a 64 checksum of all preceding bytes

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "finreid/data.hpp"
#include "finreid/rng.hpp"
#include "finreid/tensor.hpp"

namespace finreid::catalogue {

inline constexpr std::size_t kIdWidth = 64;
inline constexpr std::size_t kDateWidth = 16;
inline constexpr std::uint32_t kStoreVersion = 1;

struct Entry {
  std::string image_id;
  std::string identity_id;
  std::string date;
  std::vector<double> embedding;
  friend bool operator==(const Entry&, const Entry&) = default;
};

class Store {
 public:
  Store(std::size_t dim, std::uint64_t fingerprint);

  std::size_t dim() const { return dim_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(const std::string& image_id) const { return index_.count(image_id) != 0; }
  const Entry& get(const std::string& image_id) const;

  /// Appends one entry; wrong dimension, duplicate or oversized ids throw.
  void add(Entry entry);
  /// Appends records with their embedding rows, all or nothing.
  void add(const std::vector<data::ImageRecord>& records, const Tensor& embeddings, std::uint64_t fingerprint);

  friend bool operator==(const Store& a, const Store& b) {
    return a.dim_ == b.dim_ && a.fingerprint_ == b.fingerprint_ && a.entries_ == b.entries_;
  }

 private:
  static void check_entry(const Entry& e, std::size_t dim);
  std::size_t dim_;
  std::uint64_t fingerprint_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

std::string encode_store(const Store& store);
Store decode_store(std::string_view bytes);
void store_save(const Store& store, const std::string& path);
Store store_load(const std::string& path);

struct Candidate {
  std::string identity_id;
  double distance = 0.0;
  /// That identity's images, nearest first (at most `support` of them).
  std::vector<std::string> image_ids;
};

struct MatchResult {
  std::vector<Candidate> candidates;
};

enum class IdentityScore {
  /// Distance to the nearest image of the identity.
  Nearest,
  /// Mean distance over the identity's images.
  Mean,
};

/// Exhaustive exact search; identities ascending by score, ties by id.
MatchResult match(const Store& store, const std::vector<double>& query, std::size_t k_ids,
                  IdentityScore score = IdentityScore::Nearest, std::size_t support = 3);

struct Clustering {
  std::vector<std::size_t> assignment;
  /// [k * D] row-major centroids.
  std::vector<double> centroids;
  std::size_t k = 0;
  double inertia = 0.0;
  std::size_t iterations = 0;
  /// Inertia after each assignment step.
  std::vector<double> inertia_trace;
};

/// k-means++ seeded Lloyd iterations; stops when assignments repeat or after
/// `max_iterations`.
Clustering group_encounter(const Tensor& embeddings, std::size_t k, Rng& rng, std::size_t max_iterations = 100);
/// Lloyd iterations from given centroids.
Clustering lloyd(const Tensor& embeddings, std::vector<double> centroids, std::size_t k,
                 std::size_t max_iterations = 100);

struct Flag {
  enum class Kind { Intra, Inter } kind = Kind::Intra;
  std::string image_a;
  std::string image_b;
  double distance = 0.0;
  friend bool operator==(const Flag&, const Flag&) = default;
};

struct Thresholds {
  double intra = 0.0;
  double inter = 0.0;
};

/// Linear-interpolated percentile (p in [0, 100]) of `values`.
double percentile(std::vector<double> values, double p);
/// 95th percentile of same-identity and 5th percentile of cross-identity
/// distances. A category without pairs gets 0, which disables it.
Thresholds default_thresholds(const Store& store);

/// Same-identity pairs above `intra` and cross-identity pairs below `inter`,
/// each pair once with image_a earlier in the store.
std::vector<Flag> consistency_check(const Store& store, double intra_threshold, double inter_threshold);
std::vector<Flag> consistency_check(const Store& store, const Thresholds& thresholds);

}  // namespace finreid::catalogue
