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

// Open-set retrieval evaluation: systematic identity folds, one query per
// identity-day with same-day gallery exclusion, Euclidean ranking, top-k
// accuracy and mAP, distractor sweeps and training-set-size ablations.

#include <cstdint>
#include <string>
#include <vector>

#include "finreid/data.hpp"
#include "finreid/rng.hpp"
#include "finreid/tensor.hpp"
#include "finreid/trainer.hpp"

namespace finreid::eval {

struct Fold {
  std::size_t index = 0;
  std::vector<std::string> identities;
};

/// Identities sorted by descending image count (ties by id); fold j takes
/// sorted positions j, j + n, j + 2n, ...
std::vector<Fold> make_folds(const data::Manifest& manifest, std::size_t n_folds = 5);

/// Indices refer to the evaluated manifest; gallery is in record order.
struct QueryCase {
  std::size_t query = 0;
  std::vector<std::size_t> gallery;
  std::vector<std::size_t> relevant;
};

struct QuerySet {
  std::vector<QueryCase> cases;
  /// Queries whose relevant set was emptied by same-day exclusion.
  std::size_t dropped = 0;
};

/// One uniformly chosen query per (identity, day); the gallery holds every
/// other record except those of the query identity on the query date.
QuerySet build_query_cases(const data::Manifest& fold, Rng& rng);

/// Exact Euclidean distance between rows.
double euclidean(const double* a, const double* b, std::size_t d);

/// Gallery positions sorted by ascending distance to `query`, ties by position.
std::vector<std::size_t> rank(const double* query, const double* gallery, std::size_t count, std::size_t dim);
std::vector<std::size_t> rank(const Tensor& query, const Tensor& gallery);

/// Relevance flags of one case in rank order.
using RankedRelevance = std::vector<bool>;

bool hit_at_k(const RankedRelevance& ranked, std::size_t k);
/// (1/R) sum over relevant ranks r of precision@r; 0 when R = 0.
double average_precision(const RankedRelevance& ranked);
double topk_accuracy(const std::vector<RankedRelevance>& cases, std::size_t k);
double mean_average_precision(const std::vector<RankedRelevance>& cases);

struct CaseResult {
  std::string query_id;
  std::string identity_id;
  std::size_t gallery_size = 0;
  std::size_t relevant = 0;
  /// 1-based rank of the first relevant gallery item.
  std::size_t first_relevant_rank = 0;
  double average_precision = 0.0;
  bool top1 = false;
  bool top5 = false;
  /// Leading image ids of the ranking.
  std::vector<std::string> ranking;
};

/// Metrics are fractions in [0, 1]; the JSON and CSV writers print percent.
struct EvalReport {
  std::size_t fold = 0;
  std::size_t distractors = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  double map = 0.0;
  std::size_t queries = 0;
  std::size_t dropped = 0;
  std::vector<CaseResult> cases;
};

/// Distractor gallery entries appended after the fold records.
struct DistractorPool {
  std::vector<std::string> image_ids;
  /// [M, D]; empty when there are no distractors.
  std::vector<double> embeddings;
  std::size_t dim = 0;
  std::size_t size() const { return image_ids.size(); }
};

DistractorPool make_distractor_pool(const data::Manifest& distractors, const Tensor& embeddings);

/// Ranked relevance of every case when the first `distractors` pool entries
/// join each gallery.
std::vector<RankedRelevance> ranked_cases(const QuerySet& set, const Tensor& embeddings,
                                          const DistractorPool* pool = nullptr, std::size_t distractors = 0);

EvalReport evaluate(const QuerySet& set, const data::Manifest& fold, const Tensor& embeddings,
                    const DistractorPool* pool = nullptr, std::size_t distractors = 0,
                    std::size_t fold_index = 0, std::size_t ranking_depth = 10);

/// One report per count; counts must ascend and the pool must cover the
/// largest. Galleries are nested across counts.
std::vector<EvalReport> distractor_sweep(const QuerySet& set, const data::Manifest& fold, const Tensor& embeddings,
                                         const DistractorPool& pool, const std::vector<std::size_t>& counts,
                                         std::size_t fold_index = 0);

inline const std::vector<std::size_t> kDefaultDistractorCounts{0, 150, 300, 600, 900, 1200};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
/// Mean and standard error (sample sd / sqrt(n)); se = 0 for n = 1.
MeanSe mean_se(const std::vector<double>& values);

struct Summary {
  std::size_t distractors = 0;
  std::size_t folds = 0;
  MeanSe top1, top5, map;
  double dropped = 0.0;
};
/// Groups reports by distractor count, in ascending order.
std::vector<Summary> summarize(const std::vector<EvalReport>& reports);

std::string report_json(const std::vector<EvalReport>& reports);
/// Rows: fold, distractors, top1, top5, mAP, dropped_queries (+ *_se on the
/// fold=mean rows).
std::string report_csv(const std::vector<EvalReport>& reports);

/// Top-2 principal component scores [N, 2]; each component's largest
/// magnitude loading is positive.
Tensor project_2d(const Tensor& embeddings);

/// Eigenvalues (descending) and row-stored eigenvectors of a symmetric matrix.
void symmetric_eigen(const std::vector<double>& a, std::size_t n, std::vector<double>& values,
                     std::vector<double>& vectors);

// ---------------------------------------------------------------- ablations

struct AblationRow {
  std::size_t setting = 0;
  std::uint64_t seed = 0;
  EvalReport report;
};

struct AblationOptions {
  trainer::TrainRunConfig base;
  /// Seed of the held-out query selection, shared by every run.
  std::uint64_t query_seed = 7;
};

/// Random identity subset of `train_pool` per (size, seed); size equal to the
/// pool keeps the pool unchanged.
data::Manifest subset_identities(const data::Manifest& train_pool, std::size_t size, std::uint64_t seed);
/// Random subset of at most `cap` images per identity.
data::Manifest cap_images(const data::Manifest& train_pool, std::size_t cap, std::uint64_t seed);

std::vector<AblationRow> ablation_individuals(const data::Manifest& train_pool, const data::Manifest& eval_fold,
                                              const std::vector<std::size_t>& sizes,
                                              const std::vector<std::uint64_t>& seeds,
                                              const AblationOptions& options);
std::vector<AblationRow> ablation_images_per_id(const data::Manifest& train_pool, const data::Manifest& eval_fold,
                                                const std::vector<std::size_t>& caps,
                                                const std::vector<std::uint64_t>& seeds,
                                                const AblationOptions& options);

/// Stacks every record of `manifest` and embeds in eval mode.
Tensor embed_manifest(const model::ModelParams& params, const data::Manifest& manifest);

std::string ablation_csv(const std::string& setting_name, const std::vector<AblationRow>& rows);

}  // namespace finreid::eval
