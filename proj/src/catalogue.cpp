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

#include "finreid/catalogue.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "finreid/binio.hpp"
#include "finreid/error.hpp"

namespace finreid::catalogue {

namespace {
constexpr const char* kModule = "catalogue";
constexpr char kMagic[8] = {'F', 'R', 'S', 'T', 'O', 'R', 'E', '\0'};

double distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return std::sqrt(s);
}

double sqdist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}
}  // namespace

Store::Store(std::size_t dim, std::uint64_t fingerprint) : dim_(dim), fingerprint_(fingerprint) {
  if (dim == 0) throw Error(kModule, "embedding dimension must be positive");
}

const Entry& Store::get(const std::string& image_id) const {
  auto it = index_.find(image_id);
  if (it == index_.end()) throw Error(kModule, "no entry for image '" + image_id + "'");
  return entries_[it->second];
}

void Store::check_entry(const Entry& e, std::size_t dim) {
  if (e.embedding.size() != dim)
    throw ShapeError(kModule, "embedding of '" + e.image_id + "' has dimension " +
                                  std::to_string(e.embedding.size()) + ", store expects " + std::to_string(dim));
  if (e.image_id.empty() || e.image_id.size() >= kIdWidth)
    throw Error(kModule, "image_id must be 1.." + std::to_string(kIdWidth - 1) + " bytes");
  if (e.identity_id.empty() || e.identity_id.size() >= kIdWidth)
    throw Error(kModule, "identity_id must be 1.." + std::to_string(kIdWidth - 1) + " bytes");
  if (e.date.size() >= kDateWidth) throw Error(kModule, "date field too long");
  for (double v : e.embedding)
    if (!std::isfinite(v)) throw NumericFault(kModule, "non-finite embedding for '" + e.image_id + "'");
}

void Store::add(Entry entry) {
  check_entry(entry, dim_);
  if (index_.count(entry.image_id)) throw Error(kModule, "duplicate image_id '" + entry.image_id + "'");
  index_.emplace(entry.image_id, entries_.size());
  entries_.push_back(std::move(entry));
}

void Store::add(const std::vector<data::ImageRecord>& records, const Tensor& embeddings, std::uint64_t fingerprint) {
  if (fingerprint != fingerprint_)
    throw Error(kModule, "model fingerprint mismatch: store holds embeddings from another model");
  if (embeddings.rank() != 2 || embeddings.dim(0) != records.size())
    throw ShapeError(kModule, "embeddings " + shape_str(embeddings.shape()) + " for " +
                                  std::to_string(records.size()) + " records");
  std::vector<Entry> batch;
  std::map<std::string, int> seen;
  const std::size_t d = embeddings.dim(1);
  for (std::size_t i = 0; i < records.size(); ++i) {
    Entry e{records[i].image_id, records[i].identity_id, records[i].date,
            std::vector<double>(embeddings.data().begin() + static_cast<long>(i * d),
                                embeddings.data().begin() + static_cast<long>((i + 1) * d))};
    check_entry(e, dim_);
    if (index_.count(e.image_id) || !seen.emplace(e.image_id, 0).second)
      throw Error(kModule, "duplicate image_id '" + e.image_id + "'");
    batch.push_back(std::move(e));
  }
  for (auto& e : batch) add(std::move(e));
}

// ---------------------------------------------------------------- file format

std::string encode_store(const Store& s) {
  binio::Writer w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.u32(kStoreVersion);
  w.u32(static_cast<std::uint32_t>(s.dim()));
  w.u64(s.fingerprint());
  w.u64(s.size());
  for (const auto& e : s.entries()) {
    w.fixed(e.image_id, kIdWidth);
    w.fixed(e.identity_id, kIdWidth);
    w.fixed(e.date, kDateWidth);
    w.f64s(e.embedding);
  }
  w.u64(binio::fnv1a64(w.buffer()));
  return w.take();
}

Store decode_store(std::string_view bytes) {
  if (bytes.size() < 40 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw IoError(kModule, "not a catalogue store");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  binio::Reader r(body, kModule);
  r.bytes(sizeof kMagic);
  const auto version = r.u32();
  if (version != kStoreVersion) throw IoError(kModule, "unsupported store version " + std::to_string(version));
  const auto dim = r.u32();
  const auto fp = r.u64();
  const auto count = r.u64();
  const std::size_t entry_bytes = 2 * kIdWidth + kDateWidth + 8 * static_cast<std::size_t>(dim);
  if (dim == 0 || count > r.remaining() / entry_bytes || count * entry_bytes != r.remaining())
    throw IoError(kModule, "store size does not match its header (truncated or corrupt)");
  if (binio::fnv1a64(body) != stored) throw IoError(kModule, "store checksum mismatch");
  Store s(dim, fp);
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    e.image_id = r.fixed(kIdWidth);
    e.identity_id = r.fixed(kIdWidth);
    e.date = r.fixed(kDateWidth);
    e.embedding = r.f64s(dim);
    s.add(std::move(e));
  }
  return s;
}

void store_save(const Store& store, const std::string& path) {
  binio::write_file_atomic(path, encode_store(store), kModule);
}

Store store_load(const std::string& path) { return decode_store(binio::read_file(path, kModule)); }

// ---------------------------------------------------------------- matching

MatchResult match(const Store& store, const std::vector<double>& query, std::size_t k_ids, IdentityScore score,
                  std::size_t support) {
  if (store.empty()) throw Error(kModule, "cannot match against an empty store");
  if (k_ids < 1) throw Error(kModule, "k must be at least 1");
  if (query.size() != store.dim())
    throw ShapeError(kModule, "query dimension " + std::to_string(query.size()) + ", store expects " +
                                  std::to_string(store.dim()));
  struct Acc {
    double best = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    std::vector<std::pair<double, std::size_t>> images;
  };
  std::map<std::string, Acc> per_id;
  const auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double d = distance(query.data(), entries[i].embedding.data(), store.dim());
    Acc& a = per_id[entries[i].identity_id];
    a.best = std::min(a.best, d);
    a.sum += d;
    a.images.push_back({d, i});
  }
  std::vector<Candidate> all;
  for (auto& [id, a] : per_id) {
    Candidate c;
    c.identity_id = id;
    c.distance = score == IdentityScore::Nearest ? a.best : a.sum / static_cast<double>(a.images.size());
    std::stable_sort(a.images.begin(), a.images.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (std::size_t j = 0; j < std::min(support, a.images.size()); ++j)
      c.image_ids.push_back(entries[a.images[j].second].image_id);
    all.push_back(std::move(c));
  }
  // per_id iterates in id order, so a stable sort keeps ties by id.
  std::stable_sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) { return a.distance < b.distance; });
  if (all.size() > k_ids) all.resize(k_ids);
  return {std::move(all)};
}

// ---------------------------------------------------------------- k-means

namespace {
double assign(const Tensor& x, const std::vector<double>& centroids, std::size_t k, std::vector<std::size_t>& out) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  out.resize(n);
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double dd = sqdist(x.data().data() + i * d, centroids.data() + c * d, d);
      if (dd < bd) {
        bd = dd;
        best = c;
      }
    }
    out[i] = best;
    inertia += bd;
  }
  return inertia;
}
}  // namespace

Clustering lloyd(const Tensor& x, std::vector<double> centroids, std::size_t k, std::size_t max_iterations) {
  if (x.rank() != 2) throw ShapeError(kModule, "k-means input must be [N, D]");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (k < 1 || k > n) throw Error(kModule, "k = " + std::to_string(k) + " outside 1.." + std::to_string(n));
  if (centroids.size() != k * d) throw ShapeError(kModule, "centroid buffer does not match k x D");
  Clustering c;
  c.k = k;
  c.inertia = assign(x, centroids, k, c.assignment);
  c.inertia_trace.push_back(c.inertia);
  for (c.iterations = 0; c.iterations < max_iterations;) {
    // Update step; an empty cluster keeps its previous centroid.
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[c.assignment[i]];
      for (std::size_t j = 0; j < d; ++j) sums[c.assignment[i] * d + j] += x[i * d + j];
    }
    for (std::size_t m = 0; m < k; ++m)
      if (counts[m] > 0)
        for (std::size_t j = 0; j < d; ++j) centroids[m * d + j] = sums[m * d + j] / static_cast<double>(counts[m]);
    ++c.iterations;
    std::vector<std::size_t> next;
    c.inertia = assign(x, centroids, k, next);
    c.inertia_trace.push_back(c.inertia);
    const bool stable = next == c.assignment;
    c.assignment = std::move(next);
    if (stable) break;
  }
  c.centroids = std::move(centroids);
  return c;
}

Clustering group_encounter(const Tensor& x, std::size_t k, Rng& rng, std::size_t max_iterations) {
  if (x.rank() != 2) throw ShapeError(kModule, "k-means input must be [N, D]");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (k < 1 || k > n) throw Error(kModule, "k = " + std::to_string(k) + " outside 1.." + std::to_string(n));
  const double* p = x.data().data();
  std::vector<double> centroids;
  std::vector<char> chosen(n, 0);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pick = first;
    if (c > 0) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += nearest[i];
      if (total > 0.0) {
        const double u = rng.uniform() * total;
        double acc = 0.0;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (nearest[i] <= 0.0) continue;
          acc += nearest[i];
          pick = i;
          if (acc > u) break;
        }
      } else {
        // Every remaining point coincides with a centre.
        pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
      }
    }
    chosen[pick] = 1;
    centroids.insert(centroids.end(), p + pick * d, p + (pick + 1) * d);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sqdist(p + i * d, p + pick * d, d));
  }
  return lloyd(x, std::move(centroids), k, max_iterations);
}

// ---------------------------------------------------------------- consistency

double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw Error(kModule, "percentile of no values");
  if (p < 0.0 || p > 100.0) throw Error(kModule, "percentile outside [0, 100]");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Thresholds default_thresholds(const Store& store) {
  std::vector<double> same, cross;
  const auto& e = store.entries();
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      const double d = distance(e[i].embedding.data(), e[j].embedding.data(), store.dim());
      (e[i].identity_id == e[j].identity_id ? same : cross).push_back(d);
    }
  Thresholds t;
  if (!same.empty()) t.intra = percentile(same, 95.0);
  if (!cross.empty()) t.inter = percentile(cross, 5.0);
  return t;
}

std::vector<Flag> consistency_check(const Store& store, const Thresholds& t) {
  std::vector<Flag> flags;
  const auto& e = store.entries();
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      const double d = distance(e[i].embedding.data(), e[j].embedding.data(), store.dim());
      const bool same = e[i].identity_id == e[j].identity_id;
      if (same && t.intra > 0.0 && d > t.intra)
        flags.push_back({Flag::Kind::Intra, e[i].image_id, e[j].image_id, d});
      else if (!same && t.inter > 0.0 && d < t.inter)
        flags.push_back({Flag::Kind::Inter, e[i].image_id, e[j].image_id, d});
    }
  return flags;
}

std::vector<Flag> consistency_check(const Store& store, double intra, double inter) {
  if (!(intra > 0.0) || !(inter > 0.0)) throw Error(kModule, "consistency thresholds must be positive");
  return consistency_check(store, Thresholds{intra, inter});
}

}  // namespace finreid::catalogue
