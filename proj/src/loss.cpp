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

#include "finreid/loss.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "finreid/error.hpp"

namespace finreid::loss {

namespace {
constexpr const char* kModule = "loss";
}

ad::Var pairwise_euclidean(ad::Var embeddings, bool guarded) {
  ad::Var sq = ad::pairwise_sqdist(embeddings);
  if (!guarded) return ad::sqrt(sq);
  return ad::sqrt(sq + kDistanceEpsilon) - std::sqrt(kDistanceEpsilon);
}

Tensor pairwise_euclidean(const Tensor& embeddings) {
  ad::Tape tape;
  return pairwise_euclidean(tape.constant(embeddings), false).value();
}

double triplet_loss_hard_margin(double d_ap, double d_an, double margin) {
  if (!(margin > 0.0)) throw Error(kModule, "margin must be positive");
  if (d_ap < 0.0 || d_an < 0.0) throw Error(kModule, "distances must be non-negative");
  return std::max(d_ap - d_an + margin, 0.0);
}

double triplet_loss_sum(const Tensor& distances, const std::vector<Triplet>& triplets, double margin) {
  const std::size_t n = distances.dim(0);
  double total = 0.0;
  for (const auto& t : triplets)
    total += triplet_loss_hard_margin(distances[t.anchor * n + t.positive],
                                      distances[t.anchor * n + t.negative], margin);
  return total;
}

MarginMode MarginMode::hard(double m) {
  if (!(m > 0.0)) throw Error(kModule, "hard margin must be positive");
  return {Kind::Hard, m};
}

void validate_batch_labels(const BatchLabels& labels) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : labels) ++counts[l];
  if (counts.size() < 2)
    throw Error(kModule, "batch-hard loss needs at least two identities in the batch");
  for (const auto& [label, c] : counts)
    if (c < 2)
      throw Error(kModule, "identity '" + label + "' has a single image in the batch");
}

BatchHardResult batch_hard_loss(ad::Var embeddings, const BatchLabels& labels,
                                const BatchHardOptions& options) {
  validate_batch_labels(labels);
  ad::Tape& tape = embeddings.tape();
  const Shape& es = embeddings.shape();
  if (es.size() != 2 || es[0] != labels.size())
    throw ShapeError(kModule, "embeddings " + shape_str(es) + " do not match " +
                                  std::to_string(labels.size()) + " labels");
  const std::size_t n = labels.size();

  ad::Var dist = options.squared ? ad::pairwise_sqdist(embeddings)
                                 : pairwise_euclidean(embeddings, options.guarded);
  // Copy: later records may reallocate the tape.
  const Tensor dv = dist.value();

  Tensor same({n, n});
  double far = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      same[i * n + j] = labels[i] == labels[j] ? 1.0 : 0.0;
      far = std::max(far, dv[i * n + j]);
    }
  // Same-identity entries are lifted above every real distance so the row
  // minimum lands on a negative.
  Tensor lift = same;
  for (double& v : lift.data()) v *= far + 1.0;

  // Distances are non-negative, so zeroing the negatives leaves the row max
  // on a positive (the anchor itself contributes 0).
  ad::Var hardest_pos = ad::max(dist * tape.constant(same), 1);
  ad::Var hardest_neg = ad::min(dist + tape.constant(std::move(lift)), 1);
  ad::Var gap = hardest_pos - hardest_neg;
  ad::Var per_anchor = options.margin.kind == MarginMode::Kind::Soft
                           ? ad::softplus(gap)
                           : ad::relu(gap + options.margin.margin);
  ad::Var total = options.mean_reduction ? ad::mean(per_anchor) : ad::sum(per_anchor);

  BatchHardResult r{total, {}};
  auto& s = r.stats;
  s.per_anchor.assign(per_anchor.value().data().begin(), per_anchor.value().data().end());
  s.hardest_positive.assign(hardest_pos.value().data().begin(), hardest_pos.value().data().end());
  s.hardest_negative.assign(hardest_neg.value().data().begin(), hardest_neg.value().data().end());
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t pi = n, ni = n;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dv[a * n + j];
      if (labels[j] == labels[a]) {
        if (pi == n || d > dv[a * n + pi]) pi = j;
      } else if (ni == n || d < dv[a * n + ni]) {
        ni = j;
      }
    }
    s.positive_index.push_back(pi);
    s.negative_index.push_back(ni);
  }
  return r;
}

MinibatchGradient accumulate_minibatch_gradient(const model::ModelParams& params, const Tensor& batch,
                                                const BatchLabels& labels,
                                                const BatchHardOptions& options) {
  ad::Tape tape;
  model::Forward fwd = model::forward(tape, params, batch, model::Mode::Train, true);
  BatchHardResult loss = batch_hard_loss(fwd.embedding, labels, options);
  tape.backward(loss.total);

  MinibatchGradient out;
  out.loss = loss.total.value().item();
  out.stats = std::move(loss.stats);
  for (const auto& v : fwd.params) out.grads.push_back(tape.grad(v));
  out.embeddings = fwd.embedding.value();
  out.batch_mean = std::move(fwd.batch_mean);
  out.batch_var = std::move(fwd.batch_var);
  return out;
}

}  // namespace finreid::loss
