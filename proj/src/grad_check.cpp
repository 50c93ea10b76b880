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

#include "finreid/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "finreid/error.hpp"

namespace finreid::ad {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  Var out = f(tape, vars);
  if (out.value().size() != 1)
    throw ShapeError("tensor", "grad_check: function output has shape " + shape_str(out.shape()));
  return out.value()[0];
}

}  // namespace

GradCheckReport grad_check_report(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                  double step) {
  if (!(step > 0.0)) throw Error("tensor", "grad_check: step must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
    Var out = f(tape, vars);
    if (out.value().size() != 1)
      throw ShapeError("tensor", "grad_check: function output has shape " + shape_str(out.shape()));
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + step;
      const double up = evaluate(f, probe);
      probe[k][i] = x0 - step;
      const double down = evaluate(f, probe);
      probe[k][i] = x0;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[k][i] - numeric) / std::max(1.0, std::abs(numeric));
      if (err > report.max_rel_error || (k == 0 && i == 0)) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err >= report.max_rel_error) {
          report.worst_input = k;
          report.worst_index = i;
          report.worst_analytic = analytic[k][i];
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double step) {
  return grad_check_report(f, inputs, step).max_rel_error;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double step) {
  return grad_check(
      [&f](Tape& tape, std::span<const Var> v) { return f(tape, v[0]); }, std::vector<Tensor>{x},
      step);
}

}  // namespace finreid::ad
