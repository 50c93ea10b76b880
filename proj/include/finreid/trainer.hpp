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

// Adam optimisation of the embedding network over PK batches, with a staged
// exponential learning-rate schedule and resumable checkpoints.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "finreid/data.hpp"
#include "finreid/loss.hpp"
#include "finreid/model.hpp"
#include "finreid/rng.hpp"

namespace finreid::trainer {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros_like(const std::vector<Tensor>& params);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Constant base_lr for warm_batches, then base_lr * gamma^(b - warm_batches).
struct Schedule {
  double base_lr = 3e-4;
  std::size_t warm_batches = 640;
  std::size_t total_batches = 2000;
  /// Per-batch decay; 0 selects the default, which brings the last batch
  /// to base_lr / 100.
  double decay_rate = 0.0;

  double gamma() const;
  void validate() const;
  /// Same shape over a shorter budget: warm phase kept at 32% of the run.
  static Schedule scaled(std::size_t total_batches, double base_lr = 3e-4);
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

double lr_at(const Schedule& schedule, std::size_t batch_index);

/// One bias-corrected Adam update in place.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state, double lr);

struct TrainRunConfig {
  std::size_t p = 10;
  std::size_t k = 4;
  loss::BatchHardOptions loss;
  Schedule schedule;
  model::EmbeddingNetConfig model;
  data::AugmentConfig augment;
  std::uint64_t sampler_seed = 1;
  std::uint64_t augment_seed = 2;
  /// Batches between checkpoints; 0 disables periodic checkpoints.
  std::size_t checkpoint_every = 0;
  std::string checkpoint_path;

  void validate() const;
  /// Seeds params, sampler and augmentation streams from one value.
  void seed_all(std::uint64_t seed);
};

std::string run_config_to_json(const TrainRunConfig& config);
TrainRunConfig run_config_from_json(const std::string& json);

struct TraceRow {
  std::size_t batch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double mean_hardest_pos = 0.0;
  double mean_hardest_neg = 0.0;
  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct TrainState {
  model::ModelParams params;
  AdamState adam;
  Rng sampler;
  Rng augmenter;
  std::size_t next_batch = 0;
  std::vector<TraceRow> trace;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

TrainState initial_state(const TrainRunConfig& config);

/// Called after every batch with the state already advanced.
using BatchCallback = std::function<void(const TrainState&)>;

/// Runs batches [state.next_batch, until) and writes periodic checkpoints.
void run_batches(TrainState& state, const TrainRunConfig& config, const data::Manifest& manifest,
                 std::size_t until, const BatchCallback& on_batch = {});

struct TrainResult {
  model::ModelParams params;
  std::vector<TraceRow> trace;
};

/// Full run from fresh parameters over the whole schedule.
TrainResult train(const TrainRunConfig& config, const data::Manifest& manifest,
                  const BatchCallback& on_batch = {});

struct Checkpoint {
  TrainRunConfig config;
  TrainState state;
};

std::string encode_checkpoint(const TrainRunConfig& config, const TrainState& state);
Checkpoint decode_checkpoint(std::string_view bytes);
void checkpoint_save(const TrainRunConfig& config, const TrainState& state, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);
/// Parameters only, from a checkpoint file.
model::ModelParams load_params(const std::string& checkpoint_path);

std::string format_trace_csv(const std::vector<TraceRow>& trace);
void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

/// Keeps large per-op buffers on the heap instead of fresh mmaps; training
/// allocates and frees the same sizes every step.
void configure_allocator();

}  // namespace finreid::trainer
