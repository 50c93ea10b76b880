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

#include <functional>
#include <span>
#include <vector>

#include "finreid/autodiff.hpp"

namespace finreid::ad {

/// A scalar-valued function recorded onto the given tape.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences for every
/// coordinate of every input. Error per coordinate is
/// |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check_report(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                  double step = 1e-4);

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double step = 1e-4);
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double step = 1e-4);

}  // namespace finreid::ad
