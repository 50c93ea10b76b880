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

// The embedding network: a small convolutional trunk followed by a
// 1024-unit fully connected layer with batch normalisation and ReLU, and a
// linear 128-unit output layer.

#include <cstdint>
#include <string>
#include <vector>

#include "finreid/autodiff.hpp"
#include "finreid/binio.hpp"
#include "finreid/tensor.hpp"

namespace finreid::model {

struct ConvBlock {
  std::size_t out_channels = 16;
  bool pool = true;
  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

struct EmbeddingNetConfig {
  std::size_t input_side = 32;
  std::size_t input_channels = 1;
  std::vector<ConvBlock> conv_blocks{{16, true}, {32, true}, {64, true}};
  std::size_t head_hidden = 1024;
  std::size_t embed_dim = 128;
  double bn_momentum = 0.9;
  std::uint64_t init_seed = 0;
  /// Project embeddings onto the unit sphere. Off by default.
  bool l2_normalize = false;

  /// Throws ShapeError for degenerate configurations.
  void validate() const;
  /// Spatial side after all pooling stages.
  std::size_t trunk_side() const;
  std::size_t trunk_features() const;

  friend bool operator==(const EmbeddingNetConfig&, const EmbeddingNetConfig&) = default;
};

inline constexpr double kBatchNormEpsilon = 1e-5;

/// All learnable tensors in a fixed order, plus batch-norm running stats.
struct ModelParams {
  EmbeddingNetConfig config;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  Tensor running_mean;
  Tensor running_var;
  std::uint64_t bn_steps_seen = 0;

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

ModelParams init_params(const EmbeddingNetConfig& config);

enum class Mode { Train, Eval };

struct Forward {
  ad::Var embedding;
  /// Leaves bound to `ModelParams::tensors`, same order.
  std::vector<ad::Var> params;
  /// Hidden activations after normalisation, before gamma/beta.
  ad::Var bn_normalized;
  /// Batch statistics (train mode only).
  Tensor batch_mean;
  Tensor batch_var;
};

/// Records the network on `tape`. Parameters become leaves that require
/// grad iff `param_grads`. Params are not mutated; see update_running_stats.
Forward forward(ad::Tape& tape, const ModelParams& params, const Tensor& batch, Mode mode,
                bool param_grads = true);

/// Exponential moving average of the batch statistics from a train-mode forward.
void update_running_stats(ModelParams& params, const Forward& fwd);
void update_running_stats(ModelParams& params, const Tensor& batch_mean, const Tensor& batch_var,
                          std::size_t batch_size);

/// Plain embedding of a [N, C, S, S] batch. Train mode updates the running
/// statistics; eval mode leaves `params` untouched.
Tensor embed(ModelParams& params, const Tensor& batch, Mode mode);
/// Eval-mode embedding, processed in chunks of `chunk` images.
Tensor embed_eval(const ModelParams& params, const Tensor& batch, std::size_t chunk = 64);

/// Hash of the config and every tensor value; identifies a trained model.
std::uint64_t fingerprint(const ModelParams& params);

std::string config_to_json(const EmbeddingNetConfig& config);
EmbeddingNetConfig config_from_json(const std::string& json);

void write_params(binio::Writer& w, const ModelParams& params);
ModelParams read_params(binio::Reader& r);

}  // namespace finreid::model
