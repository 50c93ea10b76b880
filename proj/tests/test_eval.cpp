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

#include "doctest.h"
#include "helpers.hpp"
#include "checks.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "finreid/error.hpp"
#include "finreid/eval.hpp"
#include "finreid/model.hpp"

using namespace finreid;
using namespace finreid::eval;

namespace {

data::ImageRecord rec(const std::string& img, const std::string& id, const std::string& date) {
  return {img, id, date, data::Image(1, 8, 8, 0.5), ""};
}

/// Identity `id` with `n` images spread over `days` consecutive dates.
void add_identity(std::vector<data::ImageRecord>& out, const std::string& id, std::size_t n, std::size_t days) {
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(rec(id + "_" + std::to_string(i), id, data::add_days("2021-01-01", static_cast<int>(i % days))));
}

}  // namespace

TEST_CASE("average precision hand cases") {
  CHECK(average_precision({true}) == 1.0);
  CHECK(average_precision({true, true, false}) == 1.0);
  CHECK(average_precision({false, true}) == 0.5);
  CHECK(average_precision({true, false, true}) == 5.0 / 6.0);
  CHECK(average_precision({false, false}) == 0.0);
  CHECK(hit_at_k({false, false, true}, 3));
  CHECK_FALSE(hit_at_k({false, false, true}, 2));
  CHECK(topk_accuracy({{true}, {false, true}}, 1) == 0.5);
  CHECK(mean_average_precision({{true}, {false, true}}) == 0.75);
}

TEST_CASE("metrics equal brute force on random instances") {
  const auto r = checks::metric_suite(200);
  CHECK(r.instances == 200);
  CHECK(r.max_topk_error <= 1e-12);
  CHECK(r.max_map_error <= 1e-12);
  CHECK(r.max_ap_error <= 1e-12);
  CHECK_FALSE(r.ranking_mismatch);
  CHECK(r.hand_cases_exact);
}

TEST_CASE("ranking is by exact distance with stable ties") {
  const Tensor q = Tensor::vector({0.0, 0.0});
  const Tensor g({4, 2}, std::vector<double>{1, 0, 0, 1, 0.5, 0, -1, 0});
  CHECK(rank(q, g) == std::vector<std::size_t>{2, 0, 1, 3});
  CHECK(euclidean(g.data().data(), g.data().data() + 2, 2) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("folds take every n-th identity by descending image count") {
  std::vector<data::ImageRecord> r;
  add_identity(r, "D", 4, 2);
  add_identity(r, "A", 10, 2);
  add_identity(r, "C", 5, 2);
  add_identity(r, "B", 9, 2);
  const data::Manifest m(r);
  const auto folds = make_folds(m, 2);
  REQUIRE(folds.size() == 2);
  CHECK(folds[0].identities == std::vector<std::string>{"A", "C"});
  CHECK(folds[1].identities == std::vector<std::string>{"B", "D"});

  std::vector<data::ImageRecord> ties;
  add_identity(ties, "z", 3, 1);
  add_identity(ties, "y", 3, 1);
  add_identity(ties, "x", 3, 1);
  const auto tf = make_folds(data::Manifest(ties), 3);
  CHECK(tf[0].identities == std::vector<std::string>{"x"});
  CHECK(tf[2].identities == std::vector<std::string>{"z"});
  CHECK_THROWS(make_folds(data::Manifest(ties), 4));
  CHECK_THROWS(make_folds(data::Manifest(ties), 0));
}

TEST_CASE("185 identities give five folds of 37 and clean query cases") {
  const auto r = checks::protocol_suite(185);
  CHECK(r.identities == 185);
  CHECK(r.fold_sizes == std::vector<std::size_t>(5, 37));
  CHECK(r.partition);
  CHECK(r.cases_scanned > 0);
  CHECK(r.exclusion_violations == 0);
  CHECK(r.relevance_violations == 0);
}

TEST_CASE("one query per identity-day, same-day exclusion and dropped queries") {
  std::vector<data::ImageRecord> r;
  add_identity(r, "A", 6, 3);  // 3 days
  add_identity(r, "B", 4, 1);  // single day: every query loses its relevant set
  add_identity(r, "C", 2, 2);
  const data::Manifest m(r);
  Rng rng(1);
  const QuerySet qs = build_query_cases(m, rng);
  CHECK(qs.cases.size() == 3 + 2);
  CHECK(qs.dropped == 1);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& c : qs.cases) {
    const auto& q = m[c.query];
    CHECK(seen.insert({q.identity_id, q.date}).second);
    for (std::size_t g : c.gallery) {
      CHECK(g != c.query);
      CHECK_FALSE((m[g].identity_id == q.identity_id && m[g].date == q.date));
    }
    CHECK(std::is_sorted(c.gallery.begin(), c.gallery.end()));
  }
  Rng a(5), b(5);
  const auto q1 = build_query_cases(m, a), q2 = build_query_cases(m, b);
  for (std::size_t i = 0; i < q1.cases.size(); ++i) CHECK(q1.cases[i].query == q2.cases[i].query);
}

TEST_CASE("nested distractors never improve a case") {
  const auto r = checks::distractor_suite(kDefaultDistractorCounts, 6);
  CHECK(r.cases > 0);
  CHECK(r.ap_increases == 0);
  CHECK(r.top1_increases == 0);
  CHECK(r.top5_increases == 0);
  for (std::size_t i = 1; i < r.map_by_count.size(); ++i) CHECK(r.map_by_count[i] <= r.map_by_count[i - 1]);
}

TEST_CASE("distractor sweep argument checks") {
  std::vector<data::ImageRecord> r;
  add_identity(r, "A", 4, 2);
  add_identity(r, "B", 4, 2);
  const data::Manifest m(r);
  Rng rng(0);
  const QuerySet qs = build_query_cases(m, rng);
  const Tensor emb = testing::random_tensor({8, 3}, rng);
  std::vector<data::ImageRecord> d;
  add_identity(d, "X", 3, 1);
  const data::Manifest dm(d);
  const auto pool = make_distractor_pool(dm, testing::random_tensor({3, 3}, rng));
  CHECK_THROWS(distractor_sweep(qs, m, emb, pool, {0, 5}));
  CHECK_THROWS(distractor_sweep(qs, m, emb, pool, {2, 1}));
  const auto reports = distractor_sweep(qs, m, emb, pool, {0, 3});
  REQUIRE(reports.size() == 2);
  CHECK(reports[1].cases[0].gallery_size == reports[0].cases[0].gallery_size + 3);
  CHECK_THROWS(make_distractor_pool(dm, testing::random_tensor({2, 3}, rng)));
}

TEST_CASE("report fields") {
  std::vector<data::ImageRecord> r;
  add_identity(r, "A", 2, 2);
  add_identity(r, "B", 2, 2);
  const data::Manifest m(r);
  // A's images coincide; B_0 sits nearer to A than to B_1.
  const Tensor emb({4, 1}, std::vector<double>{0.0, 0.0, 5.0, 11.0});
  Rng rng(0);
  const auto rep = evaluate(build_query_cases(m, rng), m, emb);
  CHECK(rep.queries == 4);
  CHECK(rep.top1 == 0.75);
  CHECK(rep.top5 == 1.0);
  for (const auto& c : rep.cases) {
    CHECK(c.ranking.size() == 3);
    CHECK(c.first_relevant_rank == (c.query_id == "B_0" ? 3 : 1));
    if (c.query_id == "B_0") CHECK(c.average_precision == 1.0 / 3.0);
  }
}

TEST_CASE("mean and standard error") {
  const MeanSe a = mean_se({1.0, 2.0, 3.0, 4.0});
  CHECK(a.mean == 2.5);
  CHECK(a.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(mean_se({7.0}).se == 0.0);
  CHECK(mean_se({}).mean == 0.0);
}

TEST_CASE("summaries and writers") {
  std::vector<EvalReport> reps(4);
  for (std::size_t i = 0; i < 4; ++i) {
    reps[i].fold = i / 2;
    reps[i].distractors = i % 2 ? 10 : 0;
    reps[i].top1 = 0.5 + 0.1 * static_cast<double>(i);
    reps[i].top5 = 1.0;
    reps[i].map = 0.6;
  }
  const auto s = summarize(reps);
  REQUIRE(s.size() == 2);
  CHECK(s[0].distractors == 0);
  CHECK(s[0].folds == 2);
  CHECK(s[0].top1.mean == doctest::Approx(0.6));
  const std::string csv = report_csv(reps);
  CHECK(csv.rfind("fold,distractors,top1,top5,mAP,dropped_queries,top1_se,top5_se,mAP_se\n", 0) == 0);
  CHECK(csv.find("mean,0,60.000000") != std::string::npos);
  const std::string json = report_json(reps);
  CHECK(json.find("\"folds\"") != std::string::npos);
  CHECK(json.find("\"summary\"") != std::string::npos);
}

TEST_CASE("symmetric eigensolver and projection agree with Eigen") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.below(8);
    Eigen::MatrixXd b(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) b(i, j) = rng.uniform(-1, 1);
    const Eigen::MatrixXd a = b * b.transpose();
    std::vector<double> flat(n * n), values, vectors;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) flat[i * n + j] = a(i, j);
    symmetric_eigen(flat, n, values, vectors);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(values[i] == doctest::Approx(es.eigenvalues()(static_cast<Eigen::Index>(n - 1 - i))).epsilon(1e-9));
      // A v = lambda v for each row-stored vector.
      Eigen::VectorXd v(n);
      for (std::size_t j = 0; j < n; ++j) v(j) = vectors[i * n + j];
      CHECK((a * v - values[i] * v).norm() < 1e-9 * std::max(1.0, values[0]));
      CHECK(v.norm() == doctest::Approx(1.0));
    }
  }

  const Tensor x = testing::random_tensor({40, 5}, rng);
  const Tensor p = project_2d(x);
  CHECK(p.shape() == Shape{40, 2});
  Eigen::MatrixXd m(40, 5);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 5; ++j) m(i, j) = x[static_cast<std::size_t>(i * 5 + j)];
  const Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.transpose() * c);
  for (int comp = 0; comp < 2; ++comp) {
    Eigen::VectorXd v = es.eigenvectors().col(4 - comp);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    const Eigen::VectorXd scores = c * v;
    for (int i = 0; i < 40; ++i)
      CHECK(p[static_cast<std::size_t>(i * 2 + comp)] == doctest::Approx(scores(i)).epsilon(1e-8));
  }
}

TEST_CASE("ablation subsets") {
  data::SynthConfig sc;
  sc.num_identities = 10;
  sc.images_per_identity = 6;
  sc.side = 8;
  const data::Manifest pool = data::synth_generate(sc);
  const auto s4 = subset_identities(pool, 4, 1);
  CHECK(s4.identity_count() == 4);
  CHECK(s4 == subset_identities(pool, 4, 1));
  CHECK(subset_identities(pool, 10, 3) == pool);
  CHECK_THROWS(subset_identities(pool, 11, 1));
  CHECK_THROWS(subset_identities(pool, 0, 1));
  const auto c2 = cap_images(pool, 2, 1);
  for (const auto& id : c2.identities()) CHECK(c2.records_of(id).size() == 2);
  CHECK(cap_images(pool, 12, 1).size() == pool.size());
}

TEST_CASE("ablation runs produce one row per setting and seed") {
  data::SynthConfig sc;
  sc.num_identities = 8;
  sc.images_per_identity = 6;
  sc.side = 16;
  const auto split = checks::synthetic_split(6, 2, 6, 3, 16, 0);
  AblationOptions opt;
  opt.base.p = 3;
  opt.base.k = 2;
  opt.base.schedule = trainer::Schedule::scaled(3);
  opt.base.model.input_side = 16;
  opt.base.model.conv_blocks = {{4, true}};
  opt.base.model.head_hidden = 16;
  opt.base.model.embed_dim = 4;
  const auto rows = ablation_individuals(split.train, split.held_out, {2, 6}, {1, 2}, opt);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].setting == 2);
  CHECK(rows[3].seed == 2);
  const std::string csv = ablation_csv("identities", rows);
  CHECK(csv.rfind("identities,seed,top1,top5,mAP,dropped_queries\n", 0) == 0);
  const auto caps = ablation_images_per_id(split.train, split.held_out, {2}, {1}, opt);
  REQUIRE(caps.size() == 1);
  CHECK(caps[0].report.queries == 6);
}
