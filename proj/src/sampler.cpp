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

#include <cmath>

#include "finreid/data.hpp"
#include "finreid/error.hpp"

namespace finreid::data {

namespace {
constexpr const char* kModule = "data";

// First `take` entries of a Fisher-Yates shuffle of `items`.
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t take, Rng& rng) {
  for (std::size_t i = 0; i < take && i + 1 < items.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
}
}  // namespace

PKBatch pk_sample(const Manifest& manifest, std::size_t p, std::size_t k, Rng& rng) {
  if (p < 2) throw Error(kModule, "PK sampling needs P >= 2");
  if (k < 2) throw Error(kModule, "PK sampling needs K >= 2");
  std::vector<std::string> ids = manifest.identities();
  if (ids.size() < p)
    throw Error(kModule, "manifest has " + std::to_string(ids.size()) + " identities, P = " +
                             std::to_string(p) + " requested");
  partial_shuffle(ids, p, rng);

  PKBatch batch;
  batch.record_indices.reserve(p * k);
  batch.labels.reserve(p * k);
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<std::size_t> recs = manifest.records_of(ids[i]);
    const std::size_t n = recs.size();
    partial_shuffle(recs, std::min(n, k), rng);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t r = j < n ? recs[j] : recs[static_cast<std::size_t>(rng.below(n))];
      batch.record_indices.push_back(r);
      batch.labels.push_back(ids[i]);
    }
  }
  return batch;
}

double sample_rotation(Rng& rng, double sigma, double max_abs) {
  if (!(sigma > 0.0) || !(max_abs > 0.0)) throw Error(kModule, "rotation sigma and bound must be positive");
  while (true) {
    const double t = rng.normal(0.0, sigma);
    if (std::abs(t) <= max_abs) return t;
  }
}

Image augment(const Image& image, Rng& rng, const AugmentConfig& config) {
  if (!config.enabled) return image;
  const double hue = rng.uniform(0.0, config.hue_max);
  const double sat = rng.uniform(config.saturation_low, config.saturation_high);
  const double angle = sample_rotation(rng, config.rotation_sigma, config.rotation_max);
  if (image.channels == 3) return rotate(adjust_saturation(adjust_hue(image, hue), sat), angle);
  return rotate(image, angle);
}

}  // namespace finreid::data
