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

#include "finreid/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "finreid/error.hpp"
#include "finreid/kernels.hpp"

namespace finreid::ad {

namespace {
constexpr const char* kModule = "tensor";

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(kModule, std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                                shape_str(b));
}
}  // namespace

// ---------------------------------------------------------------- Var / Tape

Tape& Var::tape() const {
  if (!tape_) throw Error(kModule, "use of an unbound Var");
  return *tape_;
}
const Tensor& Var::value() const { return tape().value(id_); }
bool Var::requires_grad() const { return tape().requires_grad(id_); }

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size())
    throw Error(kModule, "Var does not belong to this tape");
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (consumed_) throw Error(kModule, "cannot record on a consumed tape");
  if (!value.all_finite()) throw NumericFault(kModule, "leaf tensor holds non-finite values");
  nodes_.push_back(Node{"leaf", std::move(value), requires_grad, false, Tensor{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  if (consumed_) throw Error(kModule, "cannot record on a consumed tape");
  bool needs_grad = false;
  for (const Var& in : inputs) {
    check_owned(in);
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
  }
  if (!value.all_finite())
    throw NumericFault(kModule, std::string(op) + ": non-finite output");
  Node node{op, std::move(value), needs_grad, false, Tensor{}, nullptr};
  if (needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(Var v) {
  check_owned(v);
  Node& n = nodes_[v.id_];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  check_owned(v);
  if (!nodes_[v.id_].requires_grad) return;
  Tensor& buf = grad_buffer(v);
  if (buf.shape() != g.shape()) shape_fail("accumulate", buf.shape(), g.shape());
  auto dst = buf.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var root) {
  check_owned(root);
  if (consumed_) throw Error(kModule, "backward on a consumed tape");
  if (nodes_[root.id_].value.size() != 1)
    throw ShapeError(kModule, "backward needs a scalar root, got shape " +
                                  shape_str(nodes_[root.id_].value.shape()));
  consumed_ = true;
  if (!nodes_[root.id_].requires_grad) return;
  grad_buffer(root)[0] = 1.0;
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    // Closures only touch grad buffers of earlier nodes; no reallocation.
    const Tensor& g = n.grad;
    n.backward(g);
    n.backward = nullptr;
  }
  for (std::size_t id = 0; id <= root.id_; ++id) {
    Node& n = nodes_[id];
    if (n.has_grad && !n.grad.all_finite())
      throw NumericFault(kModule, std::string(n.op) + ": non-finite gradient");
  }
}

const Tensor& Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id_];
  if (!n.requires_grad) throw Error(kModule, "grad() of a node that does not require grad");
  if (!consumed_) throw Error(kModule, "grad() before backward()");
  if (!n.has_grad) const_cast<Tape*>(this)->grad_buffer(v);
  return n.grad;
}

// ---------------------------------------------------------------- helpers

namespace {

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<long>(small.size()));
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  shape_fail(op, a, b);
}

template <typename F, typename DA, typename DB>
Var binary(const char* op, Var a, Var b, F f, DA dfa, DB dfb) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Shape out_shape = broadcast_shape(op, av.shape(), bv.shape());
  Tensor out(out_shape);
  const std::size_t na = av.size(), nb = bv.size();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(av[i % na], bv[i % nb]);
  const Var inputs[] = {a, b};
  return tape.record(op, std::move(out), inputs, [a, b, dfa, dfb, &tape](const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t na = av.size(), nb = bv.size();
    if (a.requires_grad()) {
      auto ga = tape.grad_buffer(a).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i % na] += g[i] * dfa(av[i % na], bv[i % nb]);
    }
    if (b.requires_grad()) {
      auto gb = tape.grad_buffer(b).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * dfb(av[i % na], bv[i % nb]);
    }
  });
}

Var scalar_const(Tape& tape, double v) { return tape.constant(Tensor::scalar(v)); }

struct AxisSplit {
  std::size_t outer, len, inner;
  Shape reduced;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ShapeError(kModule, std::string(op) + ": axis " + std::to_string(axis) +
                                  " out of range for shape " + shape_str(s));
  AxisSplit r{1, s[axis], 1, {}};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) r.reduced.push_back(s[i]);
  return r;
}

Var extremum_axis(const char* op, Var x, std::size_t axis, bool take_max) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  AxisSplit sp = split_axis(op, xv.shape(), axis);
  Tensor out(sp.reduced);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      std::size_t best = o * sp.len * sp.inner + in;
      for (std::size_t l = 1; l < sp.len; ++l) {
        const std::size_t idx = (o * sp.len + l) * sp.inner + in;
        if (take_max ? xv[idx] > xv[best] : xv[idx] < xv[best]) best = idx;
      }
      out[o * sp.inner + in] = xv[best];
      arg[o * sp.inner + in] = best;
    }
  const Var inputs[] = {x};
  return tape.record(op, std::move(out), inputs, [x, arg = std::move(arg), &tape](const Tensor& g) {
    auto gx = tape.grad_buffer(x).data();
    for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += g[i];
  });
}

Var extremum_all(const char* op, Var x, bool take_max) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  std::size_t best = 0;
  for (std::size_t i = 1; i < xv.size(); ++i)
    if (take_max ? xv[i] > xv[best] : xv[i] < xv[best]) best = i;
  const Var inputs[] = {x};
  return tape.record(op, Tensor::scalar(xv[best]), inputs, [x, best, &tape](const Tensor& g) {
    tape.grad_buffer(x)[best] += g[0];
  });
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}
Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}
Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}
Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator/(Var a, Var b) { return div(a, b); }
Var operator+(Var a, double b) { return add(a, scalar_const(a.tape(), b)); }
Var operator-(Var a, double b) { return sub(a, scalar_const(a.tape(), b)); }
Var operator*(Var a, double b) { return mul(a, scalar_const(a.tape(), b)); }
Var operator*(double a, Var b) { return mul(scalar_const(b.tape(), a), b); }
Var operator-(Var a) { return mul(a, scalar_const(a.tape(), -1.0)); }

namespace {
template <typename F, typename DF>
Var map(const char* op, Var x, F f, DF df) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const Var inputs[] = {x};
  // Output values are needed by some derivatives (exp, sqrt); read them back
  // from the tape through the node id captured after recording.
  auto next_id = std::make_shared<std::size_t>(0);
  Var result = tape.record(op, std::move(out), inputs, [x, df, next_id, &tape](const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& yv = tape.value(*next_id);
    auto gx = tape.grad_buffer(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
  *next_id = result.id();
  return result;
}
}  // namespace

Var relu(Var x) {
  return map(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var x) {
  return map(
      "softplus", x,
      [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Var exp(Var x) {
  return map(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return map(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(Var x) {
  return map(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Var square(Var x) {
  return map(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---------------------------------------------------------------- reductions

Var sum(Var x) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const Var inputs[] = {x};
  return tape.record("sum", Tensor::scalar(s), inputs, [x, &tape](const Tensor& g) {
    for (double& v : tape.grad_buffer(x).data()) v += g[0];
  });
}

Var sum(Var x, std::size_t axis) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  AxisSplit sp = split_axis("sum", xv.shape(), axis);
  Tensor out(sp.reduced);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l)
      for (std::size_t in = 0; in < sp.inner; ++in)
        out[o * sp.inner + in] += xv[(o * sp.len + l) * sp.inner + in];
  const Var inputs[] = {x};
  return tape.record("sum", std::move(out), inputs, [x, sp, &tape](const Tensor& g) {
    auto gx = tape.grad_buffer(x).data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t l = 0; l < sp.len; ++l)
        for (std::size_t in = 0; in < sp.inner; ++in)
          gx[(o * sp.len + l) * sp.inner + in] += g[o * sp.inner + in];
  });
}

Var mean(Var x) { return sum(x) * (1.0 / static_cast<double>(x.value().size())); }

Var mean(Var x, std::size_t axis) {
  const double len = static_cast<double>(split_axis("mean", x.shape(), axis).len);
  return sum(x, axis) * (1.0 / len);
}

Var max(Var x) { return extremum_all("max", x, true); }
Var min(Var x) { return extremum_all("min", x, false); }
Var max(Var x, std::size_t axis) { return extremum_axis("max", x, axis, true); }
Var min(Var x, std::size_t axis) { return extremum_axis("min", x, axis, false); }

// ---------------------------------------------------------------- structure

Var reshape(Var x, Shape shape) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  if (shape_size(shape) != xv.size()) shape_fail("reshape", xv.shape(), shape);
  const Var inputs[] = {x};
  return tape.record("reshape", xv.reshaped(std::move(shape)), inputs, [x, &tape](const Tensor& g) {
    auto gx = tape.grad_buffer(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError(kModule, "concat: no operands");
  Tape& tape = parts[0].tape();
  const Shape& first = parts[0].shape();
  if (axis >= first.size())
    throw ShapeError(kModule, "concat: axis out of range for shape " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok) shape_fail("concat", first, s);
    out_shape[axis] += s[axis];
  }
  AxisSplit sp = split_axis("concat", out_shape, axis);
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const std::size_t len = p.shape()[axis];
    const Tensor& pv = p.value();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(pv.data().begin() + static_cast<long>(o * len * sp.inner), len * sp.inner,
                  out.data().begin() + static_cast<long>((o * sp.len + off) * sp.inner));
    off += len;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record("concat", std::move(out), inputs,
                     [inputs, offsets, sp, axis, &tape](const Tensor& g) {
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         if (!inputs[k].requires_grad()) continue;
                         const std::size_t len = inputs[k].shape()[axis];
                         auto gp = tape.grad_buffer(inputs[k]).data();
                         for (std::size_t o = 0; o < sp.outer; ++o)
                           for (std::size_t i = 0; i < len * sp.inner; ++i)
                             gp[o * len * sp.inner + i] +=
                                 g[(o * sp.len + offsets[k]) * sp.inner + i];
                       }
                     });
}

// ---------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    shape_fail("matmul", av.shape(), bv.shape());
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out(Shape{m, n});
  kernels::gemm(false, false, m, n, k, 1.0, av.data().data(), k, bv.data().data(), n, 0.0,
                out.data().data(), n);
  const Var inputs[] = {a, b};
  return tape.record("matmul", std::move(out), inputs, [a, b, m, n, k, &tape](const Tensor& g) {
    if (a.requires_grad()) {
      // dA = G B^T
      kernels::gemm(false, true, m, k, n, 1.0, g.data().data(), n, b.value().data().data(), n, 1.0,
                    tape.grad_buffer(a).data().data(), k);
    }
    if (b.requires_grad()) {
      // dB = A^T G
      kernels::gemm(true, false, k, n, m, 1.0, a.value().data().data(), k, g.data().data(), n, 1.0,
                    tape.grad_buffer(b).data().data(), n);
    }
  });
}

namespace {
Var conv2d_impl(Var input, Var weight, const Var* bias, std::size_t stride, std::size_t padding) {
  Tape& tape = input.tape();
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1))
    shape_fail("conv2d", x.shape(), w.shape());
  if (stride == 0) throw ShapeError(kModule, "conv2d: stride must be positive");
  kernels::Conv2dGeometry geo;
  geo.batch = x.dim(0);
  geo.in_channels = x.dim(1);
  geo.in_h = x.dim(2);
  geo.in_w = x.dim(3);
  geo.out_channels = w.dim(0);
  geo.kernel_h = w.dim(2);
  geo.kernel_w = w.dim(3);
  geo.stride = stride;
  geo.padding = padding;
  if (geo.in_h + 2 * padding < geo.kernel_h || geo.in_w + 2 * padding < geo.kernel_w)
    shape_fail("conv2d", x.shape(), w.shape());
  if (bias) {
    const Tensor& bv = bias->value();
    if (bv.rank() != 1 || bv.dim(0) != geo.out_channels) shape_fail("conv2d bias", w.shape(), bv.shape());
  }
  Tensor out(Shape{geo.batch, geo.out_channels, geo.out_h(), geo.out_w()});
  auto cols = std::make_shared<std::vector<double>>();
  kernels::conv2d_forward(geo, x.data().data(), w.data().data(),
                          bias ? bias->value().data().data() : nullptr, out.data().data(), *cols);
  std::vector<Var> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  return tape.record("conv2d", std::move(out), inputs,
                     [inputs, geo, cols, &tape](const Tensor& g) {
                       const Var& in = inputs[0];
                       const Var& wt = inputs[1];
                       const bool has_bias = inputs.size() == 3;
                       kernels::conv2d_backward(
                           geo, g.data().data(), *cols, wt.value().data().data(),
                           in.requires_grad() ? tape.grad_buffer(in).data().data() : nullptr,
                           wt.requires_grad() ? tape.grad_buffer(wt).data().data() : nullptr,
                           has_bias && inputs[2].requires_grad()
                               ? tape.grad_buffer(inputs[2]).data().data()
                               : nullptr);
                     });
}
}  // namespace

Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  return conv2d_impl(input, weight, &bias, stride, padding);
}

Var conv2d(Var input, Var weight, std::size_t stride, std::size_t padding) {
  return conv2d_impl(input, weight, nullptr, stride, padding);
}

Var maxpool2d(Var input, std::size_t window, std::size_t stride) {
  Tape& tape = input.tape();
  const Tensor& x = input.value();
  if (x.rank() != 4 || window == 0 || stride == 0 || x.dim(2) < window || x.dim(3) < window)
    throw ShapeError(kModule, "maxpool2d: cannot pool shape " + shape_str(x.shape()) +
                                  " with window " + std::to_string(window));
  kernels::Pool2dGeometry geo{x.dim(0), x.dim(1), x.dim(2), x.dim(3), window, stride};
  Tensor out(Shape{geo.batch, geo.channels, geo.out_h(), geo.out_w()});
  std::vector<std::size_t> argmax;
  kernels::maxpool2d_forward(geo, x.data().data(), out.data().data(), argmax);
  const Var inputs[] = {input};
  return tape.record("maxpool2d", std::move(out), inputs,
                     [input, geo, argmax = std::move(argmax), &tape](const Tensor& g) {
                       kernels::maxpool2d_backward(geo, g.data().data(), argmax,
                                                   tape.grad_buffer(input).data().data());
                     });
}

Var pairwise_sqdist(Var rows) {
  Tape& tape = rows.tape();
  const Tensor& e = rows.value();
  if (e.rank() != 2) throw ShapeError(kModule, "pairwise_sqdist: need [N, D], got " + shape_str(e.shape()));
  const std::size_t n = e.dim(0), d = e.dim(1);
  Tensor out(Shape{n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = e[i * d + k] - e[j * d + k];
        s += diff * diff;
      }
      out[i * n + j] = s;
      out[j * n + i] = s;
    }
  const Var inputs[] = {rows};
  return tape.record("pairwise_sqdist", std::move(out), inputs, [rows, n, d, &tape](const Tensor& g) {
    const Tensor& e = rows.value();
    auto ge = tape.grad_buffer(rows).data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = 2.0 * (g[i * n + j] + g[j * n + i]);
        if (w == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) ge[i * d + k] += w * (e[i * d + k] - e[j * d + k]);
      }
  });
}

}  // namespace finreid::ad
