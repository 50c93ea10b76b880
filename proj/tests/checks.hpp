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

// Property and oracle suites shared by the unit tests and the acceptance
// runner. Each returns measurements; callers decide what to assert.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "finreid/data.hpp"
#include "finreid/eval.hpp"

namespace checks {

struct GradientResult {
  /// Worst relative error per primitive over all seeds.
  std::map<std::string, double> primitive_max;
  double composition_max = 0.0;
  std::size_t composition_cases = 0;
  /// Seeds skipped because the batch had a near tie in hardest selection.
  std::size_t composition_skipped = 0;
};

/// Central-difference checks of every primitive for seeds [0, cases) and of
/// the network plus batch-hard loss for `cases` tie-free batches.
GradientResult gradient_suite(std::size_t cases);

struct BatchHardResult {
  std::size_t batches = 0;
  double max_distance_error = 0.0;
  double max_anchor_loss_error = 0.0;
  double max_total_error = 0.0;
  bool index_mismatch = false;
};

/// batch_hard_loss against exhaustive (a, p, n) enumeration, for soft and
/// hard margins, exact and guarded distances.
BatchHardResult batch_hard_suite(std::size_t batches, std::uint64_t seed = 0);

struct MetricResult {
  std::size_t instances = 0;
  double max_topk_error = 0.0;
  double max_map_error = 0.0;
  double max_ap_error = 0.0;
  bool ranking_mismatch = false;
  bool hand_cases_exact = false;
};

/// Ranking, top-k and mAP against brute force on random instances (gallery
/// at most `max_gallery`), plus three hand-computed AP values.
MetricResult metric_suite(std::size_t instances, std::size_t max_gallery = 30, std::uint64_t seed = 0);

struct ProtocolResult {
  std::size_t identities = 0;
  std::vector<std::size_t> fold_sizes;
  bool partition = false;
  std::size_t cases_scanned = 0;
  std::size_t exclusion_violations = 0;
  std::size_t relevance_violations = 0;
};

/// Folds over `identities` synthetic identities and an exhaustive scan of
/// every query case in every fold.
ProtocolResult protocol_suite(std::size_t identities, std::size_t folds = 5, std::uint64_t seed = 0);

struct DistractorResult {
  std::vector<std::size_t> counts;
  std::size_t cases = 0;
  std::size_t ap_increases = 0;
  std::size_t top1_increases = 0;
  std::size_t top5_increases = 0;
  std::vector<double> map_by_count;
};

/// Nested distractor sweep with embeddings from a seeded network.
DistractorResult distractor_suite(const std::vector<std::size_t>& counts, std::size_t fold_identities = 15,
                                  std::uint64_t seed = 0);

/// Train and held-out manifests for the synthetic end-to-end runs.
struct SplitData {
  finreid::data::Manifest train;
  finreid::data::Manifest held_out;
};
SplitData synthetic_split(std::size_t train_ids, std::size_t held_ids, std::size_t per_id, std::size_t days,
                          std::size_t side, std::uint64_t seed);

/// Held-out evaluation of a trained model with a fixed query seed.
finreid::eval::EvalReport held_out_report(const finreid::model::ModelParams& params,
                                          const finreid::data::Manifest& held_out, std::uint64_t query_seed);

}  // namespace checks
