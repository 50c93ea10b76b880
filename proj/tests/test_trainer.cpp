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

#include <cmath>

#include "finreid/binio.hpp"
#include "finreid/error.hpp"
#include "finreid/trainer.hpp"

using namespace finreid;
using namespace finreid::trainer;

namespace {

TrainRunConfig small_run(std::size_t batches, std::uint64_t seed = 1) {
  TrainRunConfig c;
  c.p = 4;
  c.k = 3;
  c.schedule = Schedule::scaled(batches);
  c.model.input_side = 16;
  c.model.conv_blocks = {{4, true}, {8, true}};
  c.model.head_hidden = 32;
  c.model.embed_dim = 8;
  c.seed_all(seed);
  return c;
}

data::Manifest small_data() {
  data::SynthConfig sc;
  sc.num_identities = 8;
  sc.images_per_identity = 6;
  sc.side = 16;
  return data::synth_generate(sc);
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const Schedule s;
  CHECK(lr_at(s, 0) == 3e-4);
  CHECK(lr_at(s, 639) == 3e-4);
  CHECK(lr_at(s, 640) == 3e-4);
  CHECK(lr_at(s, 641) == doctest::Approx(3e-4 * s.gamma()).epsilon(1e-14));
  CHECK(lr_at(s, 1999) == doctest::Approx(3e-6).epsilon(1e-12));
  CHECK(s.gamma() == doctest::Approx(std::pow(0.01, 1.0 / 1359.0)).epsilon(1e-15));
  for (std::size_t b = 641; b < 2000; ++b) CHECK(lr_at(s, b) < lr_at(s, b - 1));
  CHECK_THROWS(lr_at(s, 2000));
  Schedule fixed = s;
  fixed.decay_rate = 0.999;
  CHECK(lr_at(fixed, 650) == doctest::Approx(3e-4 * std::pow(0.999, 10)));
  const Schedule sc = Schedule::scaled(300);
  CHECK(sc.warm_batches == 96);
  CHECK(lr_at(sc, 299) == doctest::Approx(3e-6).epsilon(1e-12));
  Schedule bad = s;
  bad.warm_batches = 2000;
  CHECK_THROWS(bad.validate());
  bad = s;
  bad.base_lr = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("Adam matches a scalar reference") {
  std::vector<Tensor> params{Tensor::vector({0.5, -1.0, 2.0})};
  AdamState st = AdamState::zeros_like(params);
  double ref[3] = {0.5, -1.0, 2.0}, m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  Rng rng(4);
  for (int t = 1; t <= 25; ++t) {
    std::vector<Tensor> grads{Tensor::vector({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)})};
    const double lr = 0.01 / t;
    adam_step(params, grads, st, lr);
    for (int i = 0; i < 3; ++i) {
      const double g = grads[0][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(st.t == 25);
  for (int i = 0; i < 3; ++i) CHECK(params[0][i] == doctest::Approx(ref[i]).epsilon(1e-13));
}

TEST_CASE("first Adam step moves every coordinate by the learning rate") {
  std::vector<Tensor> params{Tensor::vector({1.0, 1.0, 1.0})};
  AdamState st = AdamState::zeros_like(params);
  adam_step(params, {Tensor::vector({0.3, -4.0, 1e-3})}, st, 0.1);
  CHECK(params[0][0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(params[0][1] == doctest::Approx(1.1).epsilon(1e-6));
  CHECK(params[0][2] == doctest::Approx(0.9).epsilon(1e-4));
  CHECK_THROWS_AS(adam_step(params, {Tensor::vector({1.0})}, st, 0.1), ShapeError);
  CHECK_THROWS(adam_step(params, {Tensor::vector({1, 1, 1})}, st, 0.0));
}

TEST_CASE("run config validation and JSON round trip") {
  TrainRunConfig c = small_run(50, 3);
  c.loss.margin = loss::MarginMode::hard(0.2);
  c.augment.rotation_sigma = 3.0;
  c.checkpoint_every = 10;
  const TrainRunConfig back = run_config_from_json(run_config_to_json(c));
  CHECK(run_config_to_json(back) == run_config_to_json(c));
  CHECK(back.model == c.model);
  CHECK(back.schedule == c.schedule);
  c.k = 1;
  CHECK_THROWS(c.validate());
  CHECK_THROWS_AS(run_config_from_json("{}"), IoError);
  TrainRunConfig s1, s2;
  s1.seed_all(5);
  s2.seed_all(5);
  CHECK(run_config_to_json(s1) == run_config_to_json(s2));
  s2.seed_all(6);
  CHECK(s1.model.init_seed != s2.model.init_seed);
}

TEST_CASE("training is bit-reproducible and resumable") {
  const data::Manifest m = small_data();
  const TrainRunConfig cfg = small_run(12);
  TrainState a = initial_state(cfg);
  run_batches(a, cfg, m, 12);
  TrainState b = initial_state(cfg);
  run_batches(b, cfg, m, 12);
  CHECK(a == b);
  CHECK(encode_checkpoint(cfg, a) == encode_checkpoint(cfg, b));
  CHECK(format_trace_csv(a.trace) == format_trace_csv(b.trace));
  REQUIRE(a.trace.size() == 12);
  for (const auto& row : a.trace) CHECK(std::isfinite(row.loss));

  testing::TempDir dir("resume");
  TrainState c = initial_state(cfg);
  run_batches(c, cfg, m, 5);
  checkpoint_save(cfg, c, dir.file("half.ckpt"));
  Checkpoint ck = checkpoint_load(dir.file("half.ckpt"));
  CHECK(ck.state == c);
  run_batches(ck.state, ck.config, m, 12);
  CHECK(ck.state == a);
  CHECK(encode_checkpoint(ck.config, ck.state) == encode_checkpoint(cfg, a));

  const TrainResult r = train(cfg, m);
  CHECK(r.params == a.params);
  CHECK(r.trace == a.trace);

  const TrainRunConfig other = small_run(12, 2);
  CHECK_FALSE(train(other, m).params == a.params);
}

TEST_CASE("periodic checkpoints") {
  const data::Manifest m = small_data();
  testing::TempDir dir("periodic");
  TrainRunConfig cfg = small_run(6);
  cfg.checkpoint_every = 4;
  cfg.checkpoint_path = dir.file("p.ckpt");
  std::size_t calls = 0;
  train(cfg, m, [&](const TrainState&) { ++calls; });
  CHECK(calls == 6);
  const Checkpoint ck = checkpoint_load(cfg.checkpoint_path);
  CHECK(ck.state.next_batch == 4);
}

TEST_CASE("damaged checkpoints are rejected") {
  const data::Manifest m = small_data();
  const TrainRunConfig cfg = small_run(4);
  TrainState s = initial_state(cfg);
  run_batches(s, cfg, m, 2);
  const std::string bytes = encode_checkpoint(cfg, s);
  CHECK(decode_checkpoint(bytes).state == s);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 20)), IoError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 10)), IoError);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), IoError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), IoError);
  CHECK_THROWS_AS(decode_checkpoint("FRSTORE\0garbage"), IoError);
  CHECK_THROWS_AS(checkpoint_load("/nonexistent.ckpt"), IoError);
  testing::TempDir dir("ckpt");
  checkpoint_save(cfg, s, dir.file("c.ckpt"));
  CHECK(load_params(dir.file("c.ckpt")) == s.params);
}

TEST_CASE("training input checks") {
  const data::Manifest m = small_data();
  TrainRunConfig cfg = small_run(4);
  cfg.p = 9;
  TrainState s = initial_state(cfg);
  CHECK_THROWS(run_batches(s, cfg, m, 1));
  cfg.p = 4;
  CHECK_THROWS(run_batches(s, cfg, m, 5));
  cfg.model.input_channels = 3;
  TrainState s3 = initial_state(cfg);
  CHECK_THROWS(run_batches(s3, cfg, m, 1));
}

TEST_CASE("divergence surfaces as a numeric fault with the batch number") {
  const data::Manifest m = small_data();
  TrainRunConfig cfg = small_run(20);
  cfg.schedule.base_lr = 1e250;
  TrainState s = initial_state(cfg);
  try {
    run_batches(s, cfg, m, 20);
    FAIL("expected a numeric fault");
  } catch (const NumericFault& e) {
    CHECK(std::string(e.what()).find("batch ") != std::string::npos);
  }
}

TEST_CASE("trace CSV") {
  const std::vector<TraceRow> rows{{0, 3e-4, 1.5, 2.0, 1.0}};
  const std::string csv = format_trace_csv(rows);
  CHECK(csv.rfind("batch,lr,loss,mean_hardest_pos,mean_hardest_neg\n", 0) == 0);
  CHECK(csv.find("0,0.00029999999999999997,1.5,2,1") != std::string::npos);
}
