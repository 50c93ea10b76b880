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

// Reverse-mode automatic differentiation over Tensor values.
//
// A Tape is created explicitly per computation. Every operation appends one
// node holding its forward value; nodes whose operands need gradients also
// keep a closure computing the vector-Jacobian product. Nodes are appended
// after their operands, so the tape is always in topological order and
// backward() is a single reverse sweep. A tape can be differentiated once.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "finreid/tensor.hpp"

namespace finreid::ad {

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient of the root w.r.t. this node's output.
  using BackwardFn = std::function<void(const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an operation node. The value must be finite; `op` names the
  /// primitive in error messages. `fn` is dropped when no input needs grad.
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn);

  /// Propagates d(root)/d(node) to every node reachable from a scalar root.
  void backward(Var root);

  /// Gradient of a node after backward(). Nodes that require grad but were
  /// not reached get a zero gradient.
  const Tensor& grad(Var v) const;

  /// Adds `g` into v's gradient buffer (no-op when v does not require grad).
  void accumulate(Var v, const Tensor& g);
  /// Direct access to v's gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer(Var v);

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

 private:
  struct Node {
    const char* op;
    Tensor value;
    bool requires_grad = false;
    bool has_grad = false;
    Tensor grad;
    BackwardFn backward;
  };
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Linear algebra and image primitives.
Var matmul(Var a, Var b);
Var conv2d(Var input, Var weight, Var bias, std::size_t stride = 1, std::size_t padding = 0);
Var conv2d(Var input, Var weight, std::size_t stride = 1, std::size_t padding = 0);
Var maxpool2d(Var input, std::size_t window = 2, std::size_t stride = 2);

// Elementwise binary ops. Shapes must be equal, or one shape must be a
// trailing suffix of the other (the smaller operand repeats over the
// leading axes of the larger; a rank-0 scalar is a suffix of every shape).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator+(Var a, double b);
Var operator-(Var a, double b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator-(Var a);

// Elementwise unary ops.
Var relu(Var x);
Var softplus(Var x);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var square(Var x);

// Reductions. The axis overloads drop the reduced axis. max/min route the
// gradient to the first extremal element on ties.
Var sum(Var x);
Var sum(Var x, std::size_t axis);
Var mean(Var x);
Var mean(Var x, std::size_t axis);
Var max(Var x);
Var max(Var x, std::size_t axis);
Var min(Var x);
Var min(Var x, std::size_t axis);

Var concat(std::span<const Var> parts, std::size_t axis);
Var reshape(Var x, Shape shape);

/// Squared Euclidean distances between the rows of a [N, D] matrix; [N, N]
/// with an exactly zero diagonal.
Var pairwise_sqdist(Var rows);

}  // namespace finreid::ad
