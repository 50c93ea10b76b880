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

#include "finreid/model.hpp"

#include <cmath>
#include <memory>

#include "json.hpp"

#include "finreid/error.hpp"
#include "finreid/rng.hpp"

namespace finreid::model {

namespace {
constexpr const char* kModule = "model";
constexpr std::uint32_t kParamsVersion = 1;
}  // namespace

void EmbeddingNetConfig::validate() const {
  if (input_channels != 1 && input_channels != 3)
    throw ShapeError(kModule, "input_channels must be 1 or 3");
  if (input_side == 0) throw ShapeError(kModule, "input_side must be positive");
  if (conv_blocks.empty()) throw ShapeError(kModule, "at least one conv block is required");
  for (const auto& b : conv_blocks)
    if (b.out_channels == 0) throw ShapeError(kModule, "conv block with zero channels");
  if (head_hidden == 0) throw ShapeError(kModule, "head_hidden must be positive");
  if (embed_dim < 2) throw ShapeError(kModule, "embed_dim must be at least 2");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0))
    throw ShapeError(kModule, "bn_momentum must lie in (0, 1)");
  std::size_t side = input_side;
  for (const auto& b : conv_blocks) {
    if (!b.pool) continue;
    if (side < 2)
      throw ShapeError(kModule, "pooling collapses the spatial side below 1 (input_side " +
                                    std::to_string(input_side) + ")");
    side /= 2;
  }
}

std::size_t EmbeddingNetConfig::trunk_side() const {
  std::size_t side = input_side;
  for (const auto& b : conv_blocks)
    if (b.pool) side /= 2;
  return side;
}

std::size_t EmbeddingNetConfig::trunk_features() const {
  return conv_blocks.back().out_channels * trunk_side() * trunk_side();
}

const Tensor& ModelParams::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  throw Error(kModule, "no parameter named '" + name + "'");
}

Tensor& ModelParams::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ModelParams&>(*this).get(name));
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

ModelParams init_params(const EmbeddingNetConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  Rng rng(config.init_seed);

  auto normal = [&rng](Shape shape, double sd) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal(0.0, sd);
    return t;
  };
  auto add = [&p](std::string name, Tensor t) {
    p.names.push_back(std::move(name));
    p.tensors.push_back(std::move(t));
  };

  std::size_t in_ch = config.input_channels;
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    const std::size_t out_ch = config.conv_blocks[i].out_channels;
    const double fan_in = static_cast<double>(in_ch * 9);
    add("conv" + std::to_string(i) + ".weight", normal({out_ch, in_ch, 3, 3}, std::sqrt(2.0 / fan_in)));
    add("conv" + std::to_string(i) + ".bias", Tensor({out_ch}, 0.0));
    in_ch = out_ch;
  }
  const std::size_t features = config.trunk_features();
  // fc1 has no bias: batch norm's beta takes that role.
  add("fc1.weight", normal({features, config.head_hidden},
                           std::sqrt(2.0 / static_cast<double>(features))));
  add("bn.gamma", Tensor({config.head_hidden}, 1.0));
  add("bn.beta", Tensor({config.head_hidden}, 0.0));
  add("fc2.weight", normal({config.head_hidden, config.embed_dim},
                           std::sqrt(1.0 / static_cast<double>(config.head_hidden))));
  add("fc2.bias", Tensor({config.embed_dim}, 0.0));

  p.running_mean = Tensor({config.head_hidden}, 0.0);
  p.running_var = Tensor({config.head_hidden}, 1.0);
  return p;
}

namespace {

ad::Var l2_normalize_rows(ad::Var e) {
  ad::Tape& tape = e.tape();
  const Tensor& ev = e.value();
  const std::size_t n = ev.dim(0), d = ev.dim(1);
  Tensor out(ev.shape());
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1e-12;
    for (std::size_t k = 0; k < d; ++k) s += ev[i * d + k] * ev[i * d + k];
    norms[i] = std::sqrt(s);
    for (std::size_t k = 0; k < d; ++k) out[i * d + k] = ev[i * d + k] / norms[i];
  }
  const ad::Var inputs[] = {e};
  auto out_id = std::make_shared<std::size_t>();
  ad::Var r = tape.record("l2_normalize", std::move(out), inputs,
                          [e, n, d, norms, out_id, &tape](const Tensor& g) {
                            const Tensor& y = tape.value(*out_id);
                            auto ge = tape.grad_buffer(e).data();
                            for (std::size_t i = 0; i < n; ++i) {
                              double dot = 0.0;
                              for (std::size_t k = 0; k < d; ++k) dot += g[i * d + k] * y[i * d + k];
                              for (std::size_t k = 0; k < d; ++k)
                                ge[i * d + k] += (g[i * d + k] - dot * y[i * d + k]) / norms[i];
                            }
                          });
  *out_id = r.id();
  return r;
}

void check_batch(const EmbeddingNetConfig& cfg, const Tensor& batch, Mode mode) {
  const Shape want{cfg.input_channels, cfg.input_side, cfg.input_side};
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != want)
    throw ShapeError(kModule, "batch shape " + shape_str(batch.shape()) + " does not match [N, " +
                                  std::to_string(cfg.input_channels) + ", " +
                                  std::to_string(cfg.input_side) + ", " +
                                  std::to_string(cfg.input_side) + "]");
  if (mode == Mode::Train && batch.dim(0) < 2)
    throw ShapeError(kModule, "train mode needs at least 2 images for batch statistics");
}

}  // namespace

Forward forward(ad::Tape& tape, const ModelParams& params, const Tensor& batch, Mode mode,
                bool param_grads) {
  const auto& cfg = params.config;
  check_batch(cfg, batch, mode);
  const std::size_t n = batch.dim(0);

  Forward f;
  for (const auto& t : params.tensors) f.params.push_back(tape.leaf(t, param_grads));

  ad::Var x = tape.constant(batch);
  std::size_t idx = 0;
  for (const auto& block : cfg.conv_blocks) {
    x = ad::relu(ad::conv2d(x, f.params[idx], f.params[idx + 1], 1, 1));
    idx += 2;
    if (block.pool) x = ad::maxpool2d(x, 2, 2);
  }
  x = ad::reshape(x, {n, cfg.trunk_features()});
  const ad::Var w1 = f.params[idx], gamma = f.params[idx + 1], beta = f.params[idx + 2];
  const ad::Var w2 = f.params[idx + 3], b2 = f.params[idx + 4];

  ad::Var h = ad::matmul(x, w1);
  if (mode == Mode::Train) {
    ad::Var mu = ad::mean(h, 0);
    ad::Var centered = h - mu;
    ad::Var var = ad::mean(ad::square(centered), 0);
    f.bn_normalized = centered / ad::sqrt(var + kBatchNormEpsilon);
    f.batch_mean = mu.value();
    f.batch_var = var.value();
  } else {
    Tensor denom = params.running_var;
    for (double& v : denom.data()) v = std::sqrt(v + kBatchNormEpsilon);
    f.bn_normalized = (h - tape.constant(params.running_mean)) / tape.constant(std::move(denom));
  }
  ad::Var hidden = ad::relu(f.bn_normalized * gamma + beta);
  ad::Var e = ad::matmul(hidden, w2) + b2;
  if (cfg.l2_normalize) e = l2_normalize_rows(e);
  f.embedding = e;
  return f;
}

void update_running_stats(ModelParams& params, const Tensor& batch_mean, const Tensor& batch_var,
                          std::size_t batch_size) {
  if (batch_mean.shape() != params.running_mean.shape() ||
      batch_var.shape() != params.running_var.shape() || batch_size < 2)
    throw Error(kModule, "update_running_stats needs train-mode batch statistics");
  const double m = params.config.bn_momentum;
  const double n = static_cast<double>(batch_size);
  const double unbias = n / (n - 1.0);
  for (std::size_t i = 0; i < params.running_mean.size(); ++i) {
    params.running_mean[i] = m * params.running_mean[i] + (1.0 - m) * batch_mean[i];
    params.running_var[i] = m * params.running_var[i] + (1.0 - m) * batch_var[i] * unbias;
  }
  ++params.bn_steps_seen;
}

void update_running_stats(ModelParams& params, const Forward& fwd) {
  update_running_stats(params, fwd.batch_mean, fwd.batch_var, fwd.embedding.value().dim(0));
}

Tensor embed(ModelParams& params, const Tensor& batch, Mode mode) {
  if (mode == Mode::Eval) return embed_eval(params, batch);
  ad::Tape tape;
  Forward f = forward(tape, params, batch, mode, false);
  update_running_stats(params, f);
  return f.embedding.value();
}

Tensor embed_eval(const ModelParams& params, const Tensor& batch, std::size_t chunk) {
  check_batch(params.config, batch, Mode::Eval);
  const std::size_t n = batch.dim(0);
  const std::size_t per_image = batch.size() / n;
  const std::size_t d = params.config.embed_dim;
  Tensor out({n, d});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Shape s = batch.shape();
    s[0] = count;
    std::vector<double> vals(batch.data().begin() + static_cast<long>(start * per_image),
                             batch.data().begin() + static_cast<long>((start + count) * per_image));
    ad::Tape tape;
    Forward f = forward(tape, params, Tensor(s, std::move(vals)), Mode::Eval, false);
    const Tensor& e = f.embedding.value();
    std::copy(e.data().begin(), e.data().end(), out.data().begin() + static_cast<long>(start * d));
  }
  return out;
}

std::string config_to_json(const EmbeddingNetConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.conv_blocks) blocks.push_back({{"out_channels", b.out_channels}, {"pool", b.pool}});
  nlohmann::json j{{"input_side", c.input_side},     {"input_channels", c.input_channels},
                   {"conv_blocks", blocks},          {"head_hidden", c.head_hidden},
                   {"embed_dim", c.embed_dim},       {"bn_momentum", c.bn_momentum},
                   {"init_seed", c.init_seed},       {"l2_normalize", c.l2_normalize}};
  return j.dump();
}

EmbeddingNetConfig config_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    EmbeddingNetConfig c;
    c.input_side = j.at("input_side").get<std::size_t>();
    c.input_channels = j.at("input_channels").get<std::size_t>();
    c.conv_blocks.clear();
    for (const auto& b : j.at("conv_blocks"))
      c.conv_blocks.push_back({b.at("out_channels").get<std::size_t>(), b.at("pool").get<bool>()});
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.l2_normalize = j.value("l2_normalize", false);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(kModule, std::string("malformed model config: ") + e.what());
  }
}

void write_params(binio::Writer& w, const ModelParams& p) {
  w.u32(kParamsVersion);
  w.str(config_to_json(p.config));
  w.u64(p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    w.str(p.names[i]);
    w.tensor(p.tensors[i]);
  }
  w.tensor(p.running_mean);
  w.tensor(p.running_var);
  w.u64(p.bn_steps_seen);
}

ModelParams read_params(binio::Reader& r) {
  const auto version = r.u32();
  if (version != kParamsVersion)
    throw IoError(kModule, "unsupported parameter block version " + std::to_string(version));
  ModelParams p;
  p.config = config_from_json(r.str());
  p.config.validate();
  const auto count = r.u64();
  const ModelParams shape_ref = init_params(p.config);
  if (count != shape_ref.tensors.size())
    throw IoError(kModule, "parameter count does not match config");
  for (std::size_t i = 0; i < count; ++i) {
    p.names.push_back(r.str());
    p.tensors.push_back(r.tensor());
    if (p.names[i] != shape_ref.names[i] || p.tensors[i].shape() != shape_ref.tensors[i].shape())
      throw IoError(kModule, "parameter '" + p.names[i] + "' does not match config");
  }
  p.running_mean = r.tensor();
  p.running_var = r.tensor();
  p.bn_steps_seen = r.u64();
  if (p.running_var.shape() != shape_ref.running_var.shape() ||
      p.running_mean.shape() != shape_ref.running_mean.shape())
    throw IoError(kModule, "batch-norm statistics do not match config");
  return p;
}

std::uint64_t fingerprint(const ModelParams& params) {
  binio::Writer w;
  write_params(w, params);
  return binio::fnv1a64(w.buffer());
}

}  // namespace finreid::model
