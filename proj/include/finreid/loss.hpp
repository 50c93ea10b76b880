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

// Euclidean distances and triplet losses over a batch of embeddings.

#include <optional>
#include <string>
#include <vector>

#include "finreid/autodiff.hpp"
#include "finreid/model.hpp"

namespace finreid::loss {

/// Offset inside the guarded square root; the loss subtracts sqrt(eps) again
/// so that d(a, a) is exactly 0 while the gradient at zero distance stays finite.
inline constexpr double kDistanceEpsilon = 1e-16;

/// [N, N] Euclidean distances between embedding rows; exact zero diagonal.
/// `guarded` selects sqrt(s + eps) - sqrt(eps) (differentiable at s = 0).
ad::Var pairwise_euclidean(ad::Var embeddings, bool guarded);
/// Non-taped convenience over plain values (exact sqrt).
Tensor pairwise_euclidean(const Tensor& embeddings);

/// [d_ap - d_an + m]^+ for one triplet.
double triplet_loss_hard_margin(double d_ap, double d_an, double margin);

/// Classic triplet loss summed over an explicit triplet list (a, p, n).
struct Triplet {
  std::size_t anchor, positive, negative;
};
double triplet_loss_sum(const Tensor& distances, const std::vector<Triplet>& triplets, double margin);

using BatchLabels = std::vector<std::string>;

struct MarginMode {
  enum class Kind { Soft, Hard } kind = Kind::Soft;
  double margin = 0.0;

  static MarginMode soft() { return {}; }
  static MarginMode hard(double m);
};

struct BatchHardOptions {
  MarginMode margin = MarginMode::soft();
  /// Squared instead of plain Euclidean distance.
  bool squared = false;
  /// Mean instead of sum over anchors.
  bool mean_reduction = false;
  /// Guarded sqrt (training). Exact sqrt otherwise.
  bool guarded = true;
};

struct BatchHardStats {
  std::vector<double> per_anchor;
  std::vector<double> hardest_positive;
  std::vector<double> hardest_negative;
  /// Row chosen as hardest positive / negative per anchor (lowest index on ties).
  std::vector<std::size_t> positive_index;
  std::vector<std::size_t> negative_index;
};

struct BatchHardResult {
  ad::Var total;
  BatchHardStats stats;
};

/// Throws unless every label occurs at least twice and at least two labels exist.
void validate_batch_labels(const BatchLabels& labels);

/// Batch-hard triplet loss: for every anchor, the farthest same-identity row
/// against the nearest other-identity row, through the soft (softplus) or
/// hard ([.]^+ with margin) hinge.
BatchHardResult batch_hard_loss(ad::Var embeddings, const BatchLabels& labels,
                                const BatchHardOptions& options = {});

struct MinibatchGradient {
  double loss = 0.0;
  /// d(loss)/d(param), same order as ModelParams::tensors.
  std::vector<Tensor> grads;
  BatchHardStats stats;
  Tensor embeddings;
  Tensor batch_mean;
  Tensor batch_var;
};

/// Train-mode forward through the network and loss, then backward.
/// Running statistics are not updated; the caller decides.
MinibatchGradient accumulate_minibatch_gradient(const model::ModelParams& params, const Tensor& batch,
                                                const BatchLabels& labels,
                                                const BatchHardOptions& options = {});

}  // namespace finreid::loss
