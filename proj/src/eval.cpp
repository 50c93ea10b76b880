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

#include "finreid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "json.hpp"

#include "finreid/error.hpp"
#include "finreid/model.hpp"

namespace finreid::eval {

namespace {
constexpr const char* kModule = "eval";
using nlohmann::json;

template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t take, Rng& rng) {
  for (std::size_t i = 0; i < take && i + 1 < items.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
}
}  // namespace

std::vector<Fold> make_folds(const data::Manifest& manifest, std::size_t n_folds) {
  if (n_folds < 1) throw Error(kModule, "need at least one fold");
  std::vector<std::string> ids = manifest.identities();
  if (ids.size() < n_folds)
    throw Error(kModule, std::to_string(ids.size()) + " identities cannot fill " + std::to_string(n_folds) +
                             " folds");
  std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    return manifest.records_of(a).size() > manifest.records_of(b).size();
  });
  std::vector<Fold> folds(n_folds);
  for (std::size_t j = 0; j < n_folds; ++j) folds[j].index = j;
  for (std::size_t i = 0; i < ids.size(); ++i) folds[i % n_folds].identities.push_back(ids[i]);
  return folds;
}

QuerySet build_query_cases(const data::Manifest& fold, Rng& rng) {
  if (fold.empty()) throw Error(kModule, "cannot build queries from an empty fold");
  QuerySet set;
  for (const auto& id : fold.identities()) {
    std::map<std::string, std::vector<std::size_t>> by_day;
    for (std::size_t r : fold.records_of(id)) by_day[fold[r].date].push_back(r);
    for (const auto& [date, recs] : by_day) {
      QueryCase qc;
      qc.query = recs[static_cast<std::size_t>(rng.below(recs.size()))];
      for (std::size_t g = 0; g < fold.size(); ++g) {
        if (fold[g].identity_id == id && fold[g].date == date) continue;
        qc.gallery.push_back(g);
        if (fold[g].identity_id == id) qc.relevant.push_back(g);
      }
      if (qc.relevant.empty())
        ++set.dropped;
      else
        set.cases.push_back(std::move(qc));
    }
  }
  return set;
}

double euclidean(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return std::sqrt(s);
}

std::vector<std::size_t> rank(const double* query, const double* gallery, std::size_t count, std::size_t dim) {
  if (count == 0) throw Error(kModule, "cannot rank an empty gallery");
  std::vector<double> dist(count);
  for (std::size_t i = 0; i < count; ++i) dist[i] = euclidean(query, gallery + i * dim, dim);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

std::vector<std::size_t> rank(const Tensor& query, const Tensor& gallery) {
  if (gallery.rank() != 2 || query.size() != gallery.dim(1))
    throw ShapeError(kModule, "rank: query " + shape_str(query.shape()) + " against gallery " +
                                  shape_str(gallery.shape()));
  return rank(query.data().data(), gallery.data().data(), gallery.dim(0), gallery.dim(1));
}

bool hit_at_k(const RankedRelevance& ranked, std::size_t k) {
  if (k < 1) throw Error(kModule, "k must be at least 1");
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i)
    if (ranked[i]) return true;
  return false;
}

double average_precision(const RankedRelevance& ranked) {
  // Extended precision so short hand-checkable cases round to the exact value.
  long double sum = 0.0L;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i]) {
      ++hits;
      sum += static_cast<long double>(hits) / static_cast<long double>(i + 1);
    }
  return hits == 0 ? 0.0 : static_cast<double>(sum / static_cast<long double>(hits));
}

double topk_accuracy(const std::vector<RankedRelevance>& cases, std::size_t k) {
  if (k < 1) throw Error(kModule, "k must be at least 1");
  if (cases.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& c : cases) hits += hit_at_k(c, k) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(cases.size());
}

double mean_average_precision(const std::vector<RankedRelevance>& cases) {
  if (cases.empty()) throw Error(kModule, "mAP of zero cases");
  double s = 0.0;
  for (const auto& c : cases) s += average_precision(c);
  return s / static_cast<double>(cases.size());
}

DistractorPool make_distractor_pool(const data::Manifest& distractors, const Tensor& embeddings) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != distractors.size())
    throw ShapeError(kModule, "distractor embeddings " + shape_str(embeddings.shape()) + " for " +
                                  std::to_string(distractors.size()) + " records");
  DistractorPool pool;
  pool.dim = embeddings.dim(1);
  pool.embeddings = embeddings.values();
  for (const auto& r : distractors.records()) pool.image_ids.push_back(r.image_id);
  return pool;
}

namespace {
// Full ordering of one case: gallery positions first, then distractors.
struct Ranked {
  std::vector<std::size_t> order;  // < gallery.size(): gallery slot, else distractor index + gallery.size()
};

Ranked rank_case(const QueryCase& qc, const Tensor& emb, const DistractorPool* pool, std::size_t distractors) {
  const std::size_t d = emb.dim(1);
  const std::size_t g = qc.gallery.size();
  std::vector<double> rows((g + distractors) * d);
  for (std::size_t i = 0; i < g; ++i)
    std::copy_n(emb.data().data() + qc.gallery[i] * d, d, rows.data() + i * d);
  if (distractors > 0) std::copy_n(pool->embeddings.data(), distractors * d, rows.data() + g * d);
  return {rank(emb.data().data() + qc.query * d, rows.data(), g + distractors, d)};
}

void check_inputs(const QuerySet& set, const Tensor& emb, const DistractorPool* pool, std::size_t distractors) {
  if (emb.rank() != 2) throw ShapeError(kModule, "embeddings must be [N, D], got " + shape_str(emb.shape()));
  for (const auto& c : set.cases)
    for (std::size_t g : c.gallery)
      if (g >= emb.dim(0) || c.query >= emb.dim(0)) throw ShapeError(kModule, "query case indexes past embeddings");
  if (distractors > 0) {
    if (!pool || pool->size() < distractors)
      throw Error(kModule, "distractor pool holds " + std::to_string(pool ? pool->size() : 0) + ", " +
                               std::to_string(distractors) + " requested");
    if (pool->dim != emb.dim(1)) throw ShapeError(kModule, "distractor embedding dimension differs");
  }
}
}  // namespace

std::vector<RankedRelevance> ranked_cases(const QuerySet& set, const Tensor& emb, const DistractorPool* pool,
                                          std::size_t distractors) {
  check_inputs(set, emb, pool, distractors);
  std::vector<RankedRelevance> out(set.cases.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < set.cases.size(); ++c) {
    const QueryCase& qc = set.cases[c];
    const Ranked r = rank_case(qc, emb, pool, distractors);
    std::vector<bool> relevant_slot(qc.gallery.size(), false);
    for (std::size_t i = 0, j = 0; i < qc.gallery.size() && j < qc.relevant.size(); ++i)
      if (qc.gallery[i] == qc.relevant[j]) {
        relevant_slot[i] = true;
        ++j;
      }
    RankedRelevance rel(r.order.size());
    for (std::size_t i = 0; i < r.order.size(); ++i)
      rel[i] = r.order[i] < qc.gallery.size() && relevant_slot[r.order[i]];
    out[c] = std::move(rel);
  }
  return out;
}

EvalReport evaluate(const QuerySet& set, const data::Manifest& fold, const Tensor& emb, const DistractorPool* pool,
                    std::size_t distractors, std::size_t fold_index, std::size_t ranking_depth) {
  check_inputs(set, emb, pool, distractors);
  EvalReport rep;
  rep.fold = fold_index;
  rep.distractors = distractors;
  rep.queries = set.cases.size();
  rep.dropped = set.dropped;
  rep.cases.resize(set.cases.size());
  std::vector<RankedRelevance> rel(set.cases.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < set.cases.size(); ++c) {
    const QueryCase& qc = set.cases[c];
    const Ranked r = rank_case(qc, emb, pool, distractors);
    const std::size_t g = qc.gallery.size();
    CaseResult& cr = rep.cases[c];
    cr.query_id = fold[qc.query].image_id;
    cr.identity_id = fold[qc.query].identity_id;
    cr.gallery_size = r.order.size();
    cr.relevant = qc.relevant.size();
    RankedRelevance rr(r.order.size());
    for (std::size_t i = 0; i < r.order.size(); ++i) {
      const std::size_t slot = r.order[i];
      rr[i] = slot < g && fold[qc.gallery[slot]].identity_id == cr.identity_id;
      if (rr[i] && cr.first_relevant_rank == 0) cr.first_relevant_rank = i + 1;
      if (i < ranking_depth)
        cr.ranking.push_back(slot < g ? fold[qc.gallery[slot]].image_id : pool->image_ids[slot - g]);
    }
    cr.average_precision = average_precision(rr);
    cr.top1 = hit_at_k(rr, 1);
    cr.top5 = hit_at_k(rr, 5);
    rel[c] = std::move(rr);
  }
  if (!rel.empty()) {
    rep.top1 = topk_accuracy(rel, 1);
    rep.top5 = topk_accuracy(rel, 5);
    rep.map = mean_average_precision(rel);
  }
  return rep;
}

std::vector<EvalReport> distractor_sweep(const QuerySet& set, const data::Manifest& fold, const Tensor& emb,
                                         const DistractorPool& pool, const std::vector<std::size_t>& counts,
                                         std::size_t fold_index) {
  if (counts.empty()) throw Error(kModule, "empty distractor grid");
  for (std::size_t i = 1; i < counts.size(); ++i)
    if (counts[i] <= counts[i - 1]) throw Error(kModule, "distractor counts must ascend");
  if (pool.size() < counts.back())
    throw Error(kModule, "distractor pool holds " + std::to_string(pool.size()) + ", sweep needs " +
                             std::to_string(counts.back()));
  std::vector<EvalReport> out;
  for (std::size_t c : counts) out.push_back(evaluate(set, fold, emb, &pool, c, fold_index));
  return out;
}

MeanSe mean_se(const std::vector<double>& v) {
  if (v.empty()) return {};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

std::vector<Summary> summarize(const std::vector<EvalReport>& reports) {
  std::map<std::size_t, std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) groups[r.distractors].push_back(&r);
  std::vector<Summary> out;
  for (const auto& [count, rs] : groups) {
    std::vector<double> t1, t5, m;
    double dropped = 0.0;
    for (const auto* r : rs) {
      t1.push_back(r->top1);
      t5.push_back(r->top5);
      m.push_back(r->map);
      dropped += static_cast<double>(r->dropped);
    }
    out.push_back({count, rs.size(), mean_se(t1), mean_se(t5), mean_se(m), dropped / static_cast<double>(rs.size())});
  }
  return out;
}

std::string report_json(const std::vector<EvalReport>& reports) {
  json j;
  j["reports"] = json::array();
  for (const auto& r : reports) {
    json cases = json::array();
    for (const auto& c : r.cases)
      cases.push_back({{"query_id", c.query_id},
                       {"identity_id", c.identity_id},
                       {"gallery_size", c.gallery_size},
                       {"relevant", c.relevant},
                       {"first_relevant_rank", c.first_relevant_rank},
                       {"ap", c.average_precision},
                       {"top1", c.top1},
                       {"top5", c.top5},
                       {"ranking", c.ranking}});
    j["reports"].push_back({{"fold", r.fold},
                            {"distractors", r.distractors},
                            {"top1", 100.0 * r.top1},
                            {"top5", 100.0 * r.top5},
                            {"mAP", 100.0 * r.map},
                            {"queries", r.queries},
                            {"dropped_queries", r.dropped},
                            {"cases", cases}});
  }
  j["summary"] = json::array();
  for (const auto& s : summarize(reports))
    j["summary"].push_back({{"distractors", s.distractors},
                            {"folds", s.folds},
                            {"top1", 100.0 * s.top1.mean},
                            {"top1_se", 100.0 * s.top1.se},
                            {"top5", 100.0 * s.top5.mean},
                            {"top5_se", 100.0 * s.top5.se},
                            {"mAP", 100.0 * s.map.mean},
                            {"mAP_se", 100.0 * s.map.se},
                            {"dropped_queries", s.dropped}});
  return j.dump(2);
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::string out = "fold,distractors,top1,top5,mAP,dropped_queries,top1_se,top5_se,mAP_se\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.6f,%zu,,,\n", r.fold, r.distractors, 100.0 * r.top1,
                  100.0 * r.top5, 100.0 * r.map, r.dropped);
    out += buf;
  }
  for (const auto& s : summarize(reports)) {
    std::snprintf(buf, sizeof buf, "mean,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", s.distractors,
                  100.0 * s.top1.mean, 100.0 * s.top5.mean, 100.0 * s.map.mean, s.dropped, 100.0 * s.top1.se,
                  100.0 * s.top5.se, 100.0 * s.map.se);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------- PCA

void symmetric_eigen(const std::vector<double>& input, std::size_t n, std::vector<double>& values,
                     std::vector<double>& vectors) {
  if (input.size() != n * n) throw ShapeError(kModule, "symmetric_eigen: matrix size mismatch");
  std::vector<double> a = input;
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  // Cyclic Jacobi rotations until the off-diagonal mass vanishes.
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += a[i * n + i] * a[i * n + i];
      for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    }
    if (off <= 1e-30 * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
  values.resize(n);
  vectors.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = a[order[i] * n + order[i]];
    for (std::size_t k = 0; k < n; ++k) vectors[i * n + k] = v[k * n + order[i]];
  }
}

Tensor project_2d(const Tensor& emb) {
  if (emb.rank() != 2 || emb.dim(1) < 2) throw ShapeError(kModule, "project_2d needs [N, D>=2] input");
  const std::size_t n = emb.dim(0), d = emb.dim(1);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) mean[k] += emb[i * d + k];
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = emb[i * d + a] - mean[a];
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += xa * (emb[i * d + b] - mean[b]);
    }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov[a * d + b] /= static_cast<double>(n);
      cov[b * d + a] = cov[a * d + b];
    }
  std::vector<double> values, vectors;
  symmetric_eigen(cov, d, values, vectors);
  Tensor out({n, 2});
  for (std::size_t c = 0; c < 2; ++c) {
    double* w = vectors.data() + c * d;
    std::size_t big = 0;
    for (std::size_t k = 1; k < d; ++k)
      if (std::abs(w[k]) > std::abs(w[big])) big = k;
    if (w[big] < 0.0)
      for (std::size_t k = 0; k < d; ++k) w[k] = -w[k];
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += (emb[i * d + k] - mean[k]) * w[k];
      out[i * 2 + c] = s;
    }
  }
  return out;
}

// ---------------------------------------------------------------- ablations

Tensor embed_manifest(const model::ModelParams& params, const data::Manifest& manifest) {
  std::vector<std::size_t> idx(manifest.size());
  std::iota(idx.begin(), idx.end(), 0);
  return model::embed_eval(params, data::to_tensor(manifest, idx, params.config.input_side));
}

data::Manifest subset_identities(const data::Manifest& pool, std::size_t size, std::uint64_t seed) {
  if (size == 0) throw Error(kModule, "ablation size must be at least 1");
  if (size > pool.identity_count())
    throw Error(kModule, "ablation size " + std::to_string(size) + " exceeds the pool of " +
                             std::to_string(pool.identity_count()) + " identities");
  if (size == pool.identity_count()) return pool;
  std::vector<std::string> ids = pool.identities();
  Rng rng = Rng::stream(seed, 0xab1);
  partial_shuffle(ids, size, rng);
  ids.resize(size);
  return pool.with_identities(ids);
}

data::Manifest cap_images(const data::Manifest& pool, std::size_t cap, std::uint64_t seed) {
  if (cap == 0) throw Error(kModule, "image cap must be at least 1");
  Rng rng = Rng::stream(seed, 0xab2);
  std::vector<std::size_t> keep;
  bool trimmed = false;
  for (const auto& id : pool.identities()) {
    std::vector<std::size_t> recs = pool.records_of(id);
    if (recs.size() > cap) {
      partial_shuffle(recs, cap, rng);
      recs.resize(cap);
      trimmed = true;
    }
    keep.insert(keep.end(), recs.begin(), recs.end());
  }
  if (!trimmed) return pool;
  std::sort(keep.begin(), keep.end());
  return pool.subset(keep);
}

namespace {
template <typename MakeTrain>
std::vector<AblationRow> run_ablation(const data::Manifest& eval_fold, const std::vector<std::size_t>& settings,
                                      const std::vector<std::uint64_t>& seeds, const AblationOptions& options,
                                      MakeTrain make_train) {
  if (settings.empty() || seeds.empty()) throw Error(kModule, "ablation needs settings and seeds");
  Rng qrng(options.query_seed);
  const QuerySet queries = build_query_cases(eval_fold, qrng);
  std::vector<AblationRow> rows;
  for (std::size_t s : settings)
    for (std::uint64_t seed : seeds) {
      const data::Manifest train_set = make_train(s, seed);
      trainer::TrainRunConfig cfg = options.base;
      cfg.seed_all(seed);
      cfg.p = std::min(cfg.p, train_set.identity_count());
      const auto result = trainer::train(cfg, train_set);
      const Tensor emb = embed_manifest(result.params, eval_fold);
      rows.push_back({s, seed, evaluate(queries, eval_fold, emb)});
    }
  return rows;
}
}  // namespace

std::vector<AblationRow> ablation_individuals(const data::Manifest& train_pool, const data::Manifest& eval_fold,
                                              const std::vector<std::size_t>& sizes,
                                              const std::vector<std::uint64_t>& seeds,
                                              const AblationOptions& options) {
  for (std::size_t s : sizes) {
    if (s == 0) throw Error(kModule, "ablation size must be at least 1");
    if (s > train_pool.identity_count())
      throw Error(kModule, "ablation size " + std::to_string(s) + " exceeds the pool of " +
                               std::to_string(train_pool.identity_count()) + " identities");
  }
  return run_ablation(eval_fold, sizes, seeds, options, [&](std::size_t size, std::uint64_t seed) {
    return subset_identities(train_pool, size, seed);
  });
}

std::vector<AblationRow> ablation_images_per_id(const data::Manifest& train_pool, const data::Manifest& eval_fold,
                                                const std::vector<std::size_t>& caps,
                                                const std::vector<std::uint64_t>& seeds,
                                                const AblationOptions& options) {
  for (std::size_t c : caps)
    if (c == 0) throw Error(kModule, "image cap must be at least 1");
  return run_ablation(eval_fold, caps, seeds, options, [&](std::size_t cap, std::uint64_t seed) {
    return cap_images(train_pool, cap, seed);
  });
}

std::string ablation_csv(const std::string& setting_name, const std::vector<AblationRow>& rows) {
  std::string out = setting_name + ",seed,top1,top5,mAP,dropped_queries\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%llu,%.6f,%.6f,%.6f,%zu\n", r.setting,
                  static_cast<unsigned long long>(r.seed), 100.0 * r.report.top1, 100.0 * r.report.top5,
                  100.0 * r.report.map, r.report.dropped);
    out += buf;
  }
  return out;
}

}  // namespace finreid::eval
