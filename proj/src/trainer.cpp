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

#include "finreid/trainer.hpp"

#include <malloc.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "json.hpp"

#include "finreid/binio.hpp"
#include "finreid/error.hpp"

namespace finreid::trainer {

namespace {
constexpr const char* kModule = "trainer";
constexpr char kMagic[8] = {'F', 'R', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
using nlohmann::json;
}  // namespace

AdamState AdamState::zeros_like(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape(), 0.0);
    s.v.emplace_back(p.shape(), 0.0);
  }
  return s;
}

// ---------------------------------------------------------------- schedule

double Schedule::gamma() const {
  if (decay_rate > 0.0) return decay_rate;
  // Batch total_batches - 1 is the last one run; it lands on base_lr / 100.
  const std::size_t steps = total_batches - 1 - warm_batches;
  return steps == 0 ? 1.0 : std::pow(0.01, 1.0 / static_cast<double>(steps));
}

void Schedule::validate() const {
  if (!(base_lr > 0.0)) throw Error(kModule, "base learning rate must be positive");
  if (warm_batches >= total_batches) throw Error(kModule, "warm_batches must be below total_batches");
  if (decay_rate < 0.0 || decay_rate > 1.0) throw Error(kModule, "decay rate must lie in (0, 1]");
}

Schedule Schedule::scaled(std::size_t total_batches, double base_lr) {
  Schedule s;
  s.base_lr = base_lr;
  s.total_batches = total_batches;
  s.warm_batches = static_cast<std::size_t>(std::llround(0.32 * static_cast<double>(total_batches)));
  return s;
}

double lr_at(const Schedule& s, std::size_t batch_index) {
  s.validate();
  if (batch_index >= s.total_batches)
    throw Error(kModule, "batch index " + std::to_string(batch_index) + " outside schedule of " +
                             std::to_string(s.total_batches) + " batches");
  if (batch_index < s.warm_batches) return s.base_lr;
  return s.base_lr * std::pow(s.gamma(), static_cast<double>(batch_index - s.warm_batches));
}

// ---------------------------------------------------------------- Adam

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& st, double lr) {
  if (!(lr > 0.0)) throw Error(kModule, "learning rate must be positive");
  if (grads.size() != params.size() || st.m.size() != params.size() || st.v.size() != params.size())
    throw ShapeError(kModule, "Adam: " + std::to_string(params.size()) + " params, " +
                                  std::to_string(grads.size()) + " grads, " + std::to_string(st.m.size()) +
                                  " moment buffers");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].shape() != params[i].shape() || st.m[i].shape() != params[i].shape() ||
        st.v[i].shape() != params[i].shape())
      throw ShapeError(kModule, "Adam: gradient " + shape_str(grads[i].shape()) + " for parameter " +
                                    shape_str(params[i].shape()));
  ++st.t;
  const double b1 = st.beta1, b2 = st.beta2, eps = st.epsilon;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data().data();
    double* m = st.m[i].data().data();
    double* v = st.v[i].data().data();
    const double* g = grads[i].data().data();
    const std::size_t n = params[i].size();
#pragma omp parallel for simd if (n > 65536) schedule(static)
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

// ---------------------------------------------------------------- config

void TrainRunConfig::validate() const {
  if (p < 2 || k < 2) throw Error(kModule, "training needs P >= 2 and K >= 2");
  schedule.validate();
  model.validate();
}

void TrainRunConfig::seed_all(std::uint64_t seed) {
  model.init_seed = splitmix64(seed ^ 0x11);
  sampler_seed = splitmix64(seed ^ 0x22);
  augment_seed = splitmix64(seed ^ 0x33);
}

std::string run_config_to_json(const TrainRunConfig& c) {
  json j;
  j["p"] = c.p;
  j["k"] = c.k;
  j["margin"] = c.loss.margin.kind == loss::MarginMode::Kind::Soft ? "soft" : "hard";
  j["margin_value"] = c.loss.margin.margin;
  j["squared_distance"] = c.loss.squared;
  j["mean_reduction"] = c.loss.mean_reduction;
  j["base_lr"] = c.schedule.base_lr;
  j["warm_batches"] = c.schedule.warm_batches;
  j["total_batches"] = c.schedule.total_batches;
  j["decay_rate"] = c.schedule.decay_rate;
  j["model"] = json::parse(model::config_to_json(c.model));
  j["augment"] = {{"enabled", c.augment.enabled},
                  {"hue_max", c.augment.hue_max},
                  {"saturation_low", c.augment.saturation_low},
                  {"saturation_high", c.augment.saturation_high},
                  {"rotation_sigma", c.augment.rotation_sigma},
                  {"rotation_max", c.augment.rotation_max}};
  j["sampler_seed"] = c.sampler_seed;
  j["augment_seed"] = c.augment_seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["checkpoint_path"] = c.checkpoint_path;
  return j.dump();
}

TrainRunConfig run_config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    TrainRunConfig c;
    c.p = j.at("p").get<std::size_t>();
    c.k = j.at("k").get<std::size_t>();
    const auto margin = j.at("margin").get<std::string>();
    c.loss.margin = margin == "soft" ? loss::MarginMode::soft()
                                     : loss::MarginMode::hard(j.at("margin_value").get<double>());
    c.loss.squared = j.at("squared_distance").get<bool>();
    c.loss.mean_reduction = j.at("mean_reduction").get<bool>();
    c.schedule.base_lr = j.at("base_lr").get<double>();
    c.schedule.warm_batches = j.at("warm_batches").get<std::size_t>();
    c.schedule.total_batches = j.at("total_batches").get<std::size_t>();
    c.schedule.decay_rate = j.at("decay_rate").get<double>();
    c.model = model::config_from_json(j.at("model").dump());
    const auto& a = j.at("augment");
    c.augment.enabled = a.at("enabled").get<bool>();
    c.augment.hue_max = a.at("hue_max").get<double>();
    c.augment.saturation_low = a.at("saturation_low").get<double>();
    c.augment.saturation_high = a.at("saturation_high").get<double>();
    c.augment.rotation_sigma = a.at("rotation_sigma").get<double>();
    c.augment.rotation_max = a.at("rotation_max").get<double>();
    c.sampler_seed = j.at("sampler_seed").get<std::uint64_t>();
    c.augment_seed = j.at("augment_seed").get<std::uint64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw IoError(kModule, std::string("malformed run config: ") + e.what());
  }
}

// ---------------------------------------------------------------- loop

TrainState initial_state(const TrainRunConfig& config) {
  config.validate();
  TrainState s{model::init_params(config.model), {}, Rng(config.sampler_seed), Rng(config.augment_seed), 0, {}};
  s.adam = AdamState::zeros_like(s.params.tensors);
  return s;
}

void run_batches(TrainState& state, const TrainRunConfig& config, const data::Manifest& manifest,
                 std::size_t until, const BatchCallback& on_batch) {
  config.validate();
  if (until > config.schedule.total_batches) throw Error(kModule, "run extends past the schedule");
  if (manifest.identity_count() < config.p)
    throw Error(kModule, "manifest has " + std::to_string(manifest.identity_count()) +
                             " identities; P = " + std::to_string(config.p) + " cannot be satisfied");
  const std::size_t side = config.model.input_side;
  for (; state.next_batch < until;) {
    const std::size_t b = state.next_batch;
    const double lr = lr_at(config.schedule, b);
    const data::PKBatch pk = data::pk_sample(manifest, config.p, config.k, state.sampler);
    std::vector<data::Image> images;
    images.reserve(pk.record_indices.size());
    for (std::size_t i : pk.record_indices) {
      const data::Image& src = manifest[i].image;
      if (src.channels != config.model.input_channels)
        throw Error(kModule, "image '" + manifest[i].image_id + "' has " + std::to_string(src.channels) +
                                 " channels, model expects " + std::to_string(config.model.input_channels));
      images.push_back(data::augment(src.height == side && src.width == side ? src : data::resize(src, side),
                                     state.augmenter, config.augment));
    }
    const Tensor batch = data::to_tensor(images, side);

    loss::MinibatchGradient g;
    try {
      g = loss::accumulate_minibatch_gradient(state.params, batch, pk.labels, config.loss);
    } catch (const NumericFault& e) {
      throw NumericFault(kModule, "batch " + std::to_string(b) + ": " + e.what());
    }
    if (!std::isfinite(g.loss)) throw NumericFault(kModule, "batch " + std::to_string(b) + ": non-finite loss");

    model::update_running_stats(state.params, g.batch_mean, g.batch_var, batch.dim(0));
    adam_step(state.params.tensors, g.grads, state.adam, lr);

    TraceRow row{b, lr, g.loss, 0.0, 0.0};
    for (double v : g.stats.hardest_positive) row.mean_hardest_pos += v;
    for (double v : g.stats.hardest_negative) row.mean_hardest_neg += v;
    row.mean_hardest_pos /= static_cast<double>(g.stats.hardest_positive.size());
    row.mean_hardest_neg /= static_cast<double>(g.stats.hardest_negative.size());
    state.trace.push_back(row);
    ++state.next_batch;

    if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() &&
        state.next_batch % config.checkpoint_every == 0)
      checkpoint_save(config, state, config.checkpoint_path);
    if (on_batch) on_batch(state);
  }
}

TrainResult train(const TrainRunConfig& config, const data::Manifest& manifest, const BatchCallback& on_batch) {
  TrainState state = initial_state(config);
  run_batches(state, config, manifest, config.schedule.total_batches, on_batch);
  return {std::move(state.params), std::move(state.trace)};
}

// ---------------------------------------------------------------- checkpoints

std::string encode_checkpoint(const TrainRunConfig& config, const TrainState& s) {
  binio::Writer w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.u32(kCheckpointVersion);
  w.str(run_config_to_json(config));
  model::write_params(w, s.params);
  w.u64(s.adam.t);
  w.f64(s.adam.beta1);
  w.f64(s.adam.beta2);
  w.f64(s.adam.epsilon);
  w.u64(s.adam.m.size());
  for (std::size_t i = 0; i < s.adam.m.size(); ++i) {
    w.tensor(s.adam.m[i]);
    w.tensor(s.adam.v[i]);
  }
  w.str(s.sampler.state());
  w.str(s.augmenter.state());
  w.u64(s.next_batch);
  w.u64(s.trace.size());
  for (const auto& r : s.trace) {
    w.u64(r.batch);
    w.f64(r.lr);
    w.f64(r.loss);
    w.f64(r.mean_hardest_pos);
    w.f64(r.mean_hardest_neg);
  }
  const std::uint64_t sum = binio::fnv1a64(w.buffer());
  w.u64(sum);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw IoError(kModule, "not a checkpoint file");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  binio::Reader r(body, kModule);
  r.bytes(sizeof kMagic);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError(kModule, "unsupported checkpoint version " + std::to_string(version));
  if (binio::fnv1a64(body) != stored) throw IoError(kModule, "checkpoint checksum mismatch (truncated or corrupt)");

  Checkpoint c;
  c.config = run_config_from_json(r.str());
  TrainState& s = c.state;
  s.params = model::read_params(r);
  s.adam.t = r.u64();
  s.adam.beta1 = r.f64();
  s.adam.beta2 = r.f64();
  s.adam.epsilon = r.f64();
  const auto n = r.u64();
  if (n != s.params.tensors.size()) throw IoError(kModule, "optimizer state does not match parameters");
  for (std::size_t i = 0; i < n; ++i) {
    s.adam.m.push_back(r.tensor());
    s.adam.v.push_back(r.tensor());
    if (s.adam.m[i].shape() != s.params.tensors[i].shape() || s.adam.v[i].shape() != s.params.tensors[i].shape())
      throw IoError(kModule, "optimizer moment shape does not match parameter");
  }
  s.sampler.set_state(r.str());
  s.augmenter.set_state(r.str());
  s.next_batch = r.u64();
  const auto rows = r.u64();
  if (rows > r.remaining()) throw IoError(kModule, "implausible trace length");
  for (std::size_t i = 0; i < rows; ++i) {
    TraceRow row;
    row.batch = r.u64();
    row.lr = r.f64();
    row.loss = r.f64();
    row.mean_hardest_pos = r.f64();
    row.mean_hardest_neg = r.f64();
    s.trace.push_back(row);
  }
  if (r.remaining() != 0) throw IoError(kModule, "trailing bytes in checkpoint");
  return c;
}

void checkpoint_save(const TrainRunConfig& config, const TrainState& state, const std::string& path) {
  binio::write_file_atomic(path, encode_checkpoint(config, state), kModule);
}

Checkpoint checkpoint_load(const std::string& path) { return decode_checkpoint(binio::read_file(path, kModule)); }

model::ModelParams load_params(const std::string& checkpoint_path) {
  return std::move(checkpoint_load(checkpoint_path).state.params);
}

// ---------------------------------------------------------------- trace

std::string format_trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = "batch,lr,loss,mean_hardest_pos,mean_hardest_neg\n";
  char buf[160];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.batch, r.lr, r.loss, r.mean_hardest_pos,
                  r.mean_hardest_neg);
    out += buf;
  }
  return out;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  binio::write_file_atomic(path, format_trace_csv(trace), kModule);
}

void configure_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
}

}  // namespace finreid::trainer
