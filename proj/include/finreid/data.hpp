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

// Labelled image manifests, PK batch sampling, training-time augmentation and
// the synthetic fin generator.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "finreid/image.hpp"
#include "finreid/loss.hpp"
#include "finreid/rng.hpp"
#include "finreid/tensor.hpp"

namespace finreid::data {

struct ImageRecord {
  std::string image_id;
  std::string identity_id;
  /// YYYY-MM-DD.
  std::string date;
  Image image;
  /// Source file when the record was loaded from a path; empty for inline pixels.
  std::string path;
};

/// True for a valid proleptic Gregorian YYYY-MM-DD date.
bool valid_date(const std::string& date);
/// `date` shifted by `days`; `date` must be valid.
std::string add_days(const std::string& date, int days);

/// Ordered image records plus identity and date indices.
class Manifest {
 public:
  Manifest() = default;
  /// Validates ids, dates and pixel ranges; throws Error("data", ...).
  explicit Manifest(std::vector<ImageRecord> records);

  const std::vector<ImageRecord>& records() const { return records_; }
  const ImageRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Identity ids in ascending order.
  std::vector<std::string> identities() const;
  std::size_t identity_count() const { return by_identity_.size(); }
  /// Record indices of one identity in manifest order.
  const std::vector<std::size_t>& records_of(const std::string& identity) const;
  std::vector<std::string> dates_of(const std::string& identity) const;
  bool has_identity(const std::string& identity) const { return by_identity_.count(identity) != 0; }
  /// Index of `image_id`, or size() when absent.
  std::size_t find(const std::string& image_id) const;

  /// Records whose index is listed, in the given order.
  Manifest subset(const std::vector<std::size_t>& indices) const;
  /// All records of the listed identities, in manifest order.
  Manifest with_identities(const std::vector<std::string>& identities) const;

  friend bool operator==(const Manifest& a, const Manifest& b);

 private:
  std::vector<ImageRecord> records_;
  std::map<std::string, std::vector<std::size_t>> by_identity_;
  std::map<std::string, std::size_t> by_image_;
};

/// Line-delimited JSON records: image_id, identity_id, date and either
/// `path` (PNG/PGM, relative to the manifest's directory) or `pixels`
/// (base64 of little-endian float64 values) with `shape` [C, H, W].
Manifest load_manifest(const std::string& path);
Manifest parse_manifest(const std::string& text, const std::string& base_dir = ".");
/// Inline-pixel JSONL; records that came from files keep their path when
/// `keep_paths` is set.
std::string format_manifest(const Manifest& manifest, bool keep_paths = false);
void save_manifest(const Manifest& manifest, const std::string& path, bool keep_paths = false);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Stacks records into a [N, C, side, side] tensor, resizing when needed.
Tensor to_tensor(const Manifest& manifest, const std::vector<std::size_t>& indices, std::size_t side);
Tensor to_tensor(const std::vector<Image>& images, std::size_t side);

struct PKBatch {
  std::vector<std::size_t> record_indices;
  loss::BatchLabels labels;
};

/// P identities uniformly without replacement, K records each (without
/// replacement when the identity has at least K images; otherwise every
/// image once and the rest drawn with replacement).
PKBatch pk_sample(const Manifest& manifest, std::size_t p, std::size_t k, Rng& rng);

struct AugmentConfig {
  bool enabled = true;
  double hue_max = 0.1;
  double saturation_low = 0.9;
  double saturation_high = 1.1;
  double rotation_sigma = 5.0;
  double rotation_max = 10.0;
};

/// Normal(0, sigma) truncated to [-max, max] by rejection.
double sample_rotation(Rng& rng, double sigma, double max_abs);

/// Random hue shift, saturation scale and rotation. Draw order is fixed
/// (hue, saturation, angle) and single-channel images skip the colour ops
/// but still consume their draws.
Image augment(const Image& image, Rng& rng, const AugmentConfig& config = {});

struct SynthConfig {
  std::size_t num_identities = 50;
  std::size_t images_per_identity = 12;
  std::size_t days_per_identity = 3;
  std::size_t side = 32;
  std::size_t channels = 1;
  std::uint64_t seed = 0;
  /// Identity ids are `<prefix><index>` zero-padded to 4 digits.
  std::string id_prefix = "fin";
  std::size_t first_index = 0;
  std::string start_date = "2021-06-01";
};

/// Nuisance-free fin mask for identity `index` under `seed`: 1 inside the
/// fin, 0 outside, anti-aliased edges.
Image canonical_silhouette(std::uint64_t seed, std::size_t index, std::size_t side);

Manifest synth_generate(const SynthConfig& config);

}  // namespace finreid::data
