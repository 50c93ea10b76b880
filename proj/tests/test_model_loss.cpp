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

#include <cmath>

#include "finreid/error.hpp"
#include "finreid/loss.hpp"
#include "finreid/model.hpp"

using namespace finreid;
using testing::random_tensor;

namespace {
model::EmbeddingNetConfig small_net(std::uint64_t seed = 0) {
  model::EmbeddingNetConfig c;
  c.input_side = 16;
  c.conv_blocks = {{4, true}, {8, true}};
  c.head_hidden = 32;
  c.embed_dim = 8;
  c.init_seed = seed;
  return c;
}
}  // namespace

TEST_CASE("default network shapes and parameter count") {
  const model::ModelParams p = model::init_params({});
  CHECK(p.config.trunk_side() == 4);
  CHECK(p.config.trunk_features() == 1024);
  std::size_t count = 0;
  for (const auto& t : p.tensors) count += t.size();
  CHECK(p.parameter_count() == count);
  CHECK(count == 160 + 4640 + 18496 + 1024 * 1024 + 2 * 1024 + 1024 * 128 + 128);
  CHECK(p.get("fc1.weight").shape() == Shape{1024, 1024});
  CHECK(p.get("fc2.weight").shape() == Shape{1024, 128});
  CHECK(p.running_mean.shape() == Shape{1024});
  CHECK_THROWS(p.get("nope"));
  Rng rng(1);
  const Tensor e = model::embed_eval(p, random_tensor({3, 1, 32, 32}, rng, 0, 1));
  CHECK(e.shape() == Shape{3, 128});
}

TEST_CASE("config validation") {
  model::EmbeddingNetConfig c;
  c.input_channels = 2;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = {};
  c.input_side = 4;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = {};
  c.embed_dim = 1;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = {};
  c.bn_momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = {};
  c.conv_blocks.clear();
  CHECK_THROWS_AS(c.validate(), ShapeError);
}

TEST_CASE("initialisation is seeded") {
  CHECK(model::init_params(small_net(3)) == model::init_params(small_net(3)));
  CHECK_FALSE(model::init_params(small_net(3)) == model::init_params(small_net(4)));
  CHECK(model::fingerprint(model::init_params(small_net(3))) != model::fingerprint(model::init_params(small_net(4))));
}

TEST_CASE("input shape is checked") {
  const auto p = model::init_params(small_net());
  Rng rng(0);
  CHECK_THROWS_AS(model::embed_eval(p, random_tensor({2, 3, 16, 16}, rng)), ShapeError);
  CHECK_THROWS_AS(model::embed_eval(p, random_tensor({2, 1, 12, 12}, rng)), ShapeError);
  ad::Tape tape;
  CHECK_THROWS_AS(model::forward(tape, p, random_tensor({1, 1, 16, 16}, rng), model::Mode::Train), ShapeError);
}

TEST_CASE("eval mode is per-image and leaves params untouched") {
  auto p = model::init_params(small_net(1));
  Rng rng(2);
  const Tensor batch = random_tensor({5, 1, 16, 16}, rng, 0, 1);
  const auto before = p;
  const Tensor all = model::embed(p, batch, model::Mode::Eval);
  CHECK(p == before);
  const Tensor chunked = model::embed_eval(p, batch, 2);
  CHECK(all == chunked);
  // Row 3 alone equals row 3 in the batch.
  Tensor one({1, 1, 16, 16});
  std::copy(batch.data().begin() + 3 * 256, batch.data().begin() + 4 * 256, one.data().begin());
  const Tensor e3 = model::embed_eval(p, one);
  for (std::size_t k = 0; k < 8; ++k) CHECK(e3[k] == doctest::Approx(all[3 * 8 + k]).epsilon(1e-12));
}

TEST_CASE("train mode normalises the hidden layer and updates running stats") {
  auto p = model::init_params(small_net(2));
  Rng rng(3);
  const Tensor batch = random_tensor({6, 1, 16, 16}, rng, 0, 1);
  ad::Tape tape;
  const auto f = model::forward(tape, p, batch, model::Mode::Train, false);
  const Tensor& z = f.bn_normalized.value();
  const std::size_t n = 6, h = 32;
  for (std::size_t j = 0; j < h; ++j) {
    double mu = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += z[i * h + j];
    mu /= n;
    for (std::size_t i = 0; i < n; ++i) sq += (z[i * h + j] - mu) * (z[i * h + j] - mu);
    const double v = f.batch_var[j];
    CHECK(std::abs(mu) < 1e-10);
    CHECK(sq / n == doctest::Approx(v / (v + model::kBatchNormEpsilon)).epsilon(1e-9));
  }
  const Tensor rm0 = p.running_mean, rv0 = p.running_var;
  model::update_running_stats(p, f);
  CHECK(p.bn_steps_seen == 1);
  for (std::size_t j = 0; j < h; ++j) {
    CHECK(p.running_mean[j] == doctest::Approx(0.9 * rm0[j] + 0.1 * f.batch_mean[j]));
    CHECK(p.running_var[j] == doctest::Approx(0.9 * rv0[j] + 0.1 * f.batch_var[j] * 6.0 / 5.0));
  }
}

TEST_CASE("l2 normalisation gives unit rows") {
  auto c = small_net();
  c.l2_normalize = true;
  const auto p = model::init_params(c);
  Rng rng(4);
  const Tensor e = model::embed_eval(p, random_tensor({4, 1, 16, 16}, rng, 0, 1));
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 8; ++k) s += e[i * 8 + k] * e[i * 8 + k];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("config json and binary parameter round trips") {
  auto c = small_net(9);
  c.l2_normalize = true;
  CHECK(model::config_from_json(model::config_to_json(c)) == c);
  const auto p = model::init_params(small_net(9));
  binio::Writer w;
  model::write_params(w, p);
  const std::string buf = w.take();
  binio::Reader r(buf, "model");
  CHECK(model::read_params(r) == p);
  binio::Reader shortr(std::string_view(buf).substr(0, buf.size() / 2), "model");
  CHECK_THROWS_AS(model::read_params(shortr), IoError);
  CHECK_THROWS_AS(model::config_from_json("{\"input_side\": \"x\"}"), IoError);
}

TEST_CASE("fingerprint tracks every value") {
  auto p = model::init_params(small_net(1));
  const auto f0 = model::fingerprint(p);
  p.running_var[0] += 1e-12;
  CHECK(model::fingerprint(p) != f0);
}

// ---------------------------------------------------------------- loss

TEST_CASE("batch-hard loss equals exhaustive triplet enumeration") {
  const auto r = checks::batch_hard_suite(100);
  CHECK(r.batches == 100);
  CHECK(r.max_distance_error <= 1e-12);
  CHECK(r.max_anchor_loss_error <= 1e-12);
  CHECK(r.max_total_error <= 1e-12);
  CHECK_FALSE(r.index_mismatch);
}

TEST_CASE("batch label validation") {
  CHECK_THROWS(loss::validate_batch_labels({"a", "a", "a"}));
  CHECK_THROWS(loss::validate_batch_labels({"a", "a", "b"}));
  CHECK_NOTHROW(loss::validate_batch_labels({"a", "b", "a", "b"}));
  ad::Tape tape;
  Rng rng(0);
  CHECK_THROWS_AS(loss::batch_hard_loss(tape.constant(random_tensor({3, 2}, rng)), {"a", "a", "b", "b"}), ShapeError);
}

TEST_CASE("hard margin hinge and triplet sums") {
  CHECK(loss::triplet_loss_hard_margin(1.0, 2.0, 0.5) == 0.0);
  CHECK(loss::triplet_loss_hard_margin(2.0, 1.0, 0.5) == 1.5);
  CHECK_THROWS(loss::triplet_loss_hard_margin(1.0, 1.0, 0.0));
  CHECK_THROWS(loss::MarginMode::hard(-1.0));
  const Tensor d({3, 3}, std::vector<double>{0, 1, 3, 1, 0, 2, 3, 2, 0});
  CHECK(loss::triplet_loss_sum(d, {{0, 1, 2}, {1, 0, 2}, {2, 1, 0}}, 1.0) == doctest::Approx(0.0 + 0.0 + 0.0));
  CHECK(loss::triplet_loss_sum(d, {{2, 0, 1}}, 1.0) == doctest::Approx(2.0));
}

TEST_CASE("soft margin uses the numerically stable softplus") {
  ad::Tape tape;
  // Identity a far apart, b far from a: gap = 0 - 50 for anchors far from positives.
  const Tensor e({4, 1}, std::vector<double>{0.0, 0.0, 50.0, 50.0});
  const auto r = loss::batch_hard_loss(tape.constant(e), {"a", "a", "b", "b"});
  for (double v : r.stats.per_anchor) CHECK(v == doctest::Approx(std::log1p(std::exp(-50.0))));
  CHECK(std::isfinite(r.total.value().item()));
}

TEST_CASE("guarded distance is exact zero on the diagonal with finite gradients") {
  ad::Tape tape;
  ad::Var e = tape.leaf(Tensor({4, 2}, std::vector<double>{1, 1, 1, 1, 2, 2, 2, 2}));
  const auto r = loss::batch_hard_loss(e, {"a", "a", "b", "b"});
  tape.backward(r.total);
  CHECK(r.stats.hardest_positive[0] == 0.0);
  CHECK(tape.grad(e).all_finite());
}

TEST_CASE("mean reduction divides the sum by the batch size") {
  Rng rng(6);
  const Tensor e = random_tensor({6, 3}, rng);
  const loss::BatchLabels l{"a", "b", "c", "a", "b", "c"};
  ad::Tape t1, t2;
  loss::BatchHardOptions mean;
  mean.mean_reduction = true;
  const double s = loss::batch_hard_loss(t1.constant(e), l).total.value().item();
  const double m = loss::batch_hard_loss(t2.constant(e), l, mean).total.value().item();
  CHECK(m == doctest::Approx(s / 6.0).epsilon(1e-14));
}

TEST_CASE("minibatch gradient leaves parameters alone and matches shapes") {
  const auto p = model::init_params(small_net(5));
  const auto before = p;
  Rng rng(8);
  const Tensor batch = random_tensor({4, 1, 16, 16}, rng, 0, 1);
  const auto g = loss::accumulate_minibatch_gradient(p, batch, {"a", "a", "b", "b"});
  CHECK(p == before);
  REQUIRE(g.grads.size() == p.tensors.size());
  for (std::size_t i = 0; i < g.grads.size(); ++i) CHECK(g.grads[i].shape() == p.tensors[i].shape());
  CHECK(std::isfinite(g.loss));
  CHECK(g.embeddings.shape() == Shape{4, 8});
}
