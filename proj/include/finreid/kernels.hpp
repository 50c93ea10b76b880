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

// Low-level numeric kernels over raw row-major buffers.
//
// Each kernel exists twice: the OpenMP-parallel version in `kernels` used by
// the autodiff layer, and a plain serial loop version in `kernels::reference`
// kept as a test oracle and benchmark baseline. Both produce the same values
// up to floating-point reassociation.

#include <cstddef>
#include <vector>

namespace finreid::kernels {

/// C = alpha * op(A) * op(B) + beta * C, row-major; op(X) = X or X^T.
/// op(A) is M x K, op(B) is K x N, C is M x N.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);

struct Conv2dGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
};

/// Unrolls the whole batch into columns of shape [C*kh*kw, N*OH*OW].
void im2col(const Conv2dGeometry& g, const double* input, double* cols);
/// Adjoint of im2col: accumulates columns back into an input-shaped buffer.
void col2im(const Conv2dGeometry& g, const double* cols, double* input_grad);

/// out[N,O,OH,OW] = conv(input[N,C,H,W], weight[O,C,kh,kw]) + bias[O].
/// `cols` receives the im2col buffer so backward can reuse it.
void conv2d_forward(const Conv2dGeometry& g, const double* input, const double* weight,
                    const double* bias, double* out, std::vector<double>& cols);

/// Gradients of conv2d. Any of the output pointers may be null to skip it.
void conv2d_backward(const Conv2dGeometry& g, const double* out_grad,
                     const std::vector<double>& cols, const double* weight, double* input_grad,
                     double* weight_grad, double* bias_grad);

struct Pool2dGeometry {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t window = 2;
  std::size_t stride = 2;

  std::size_t out_h() const { return (in_h - window) / stride + 1; }
  std::size_t out_w() const { return (in_w - window) / stride + 1; }
};

/// Max pooling; `argmax` receives the flat input index chosen for every
/// output (first maximum in scan order on ties).
void maxpool2d_forward(const Pool2dGeometry& g, const double* input, double* out,
                       std::vector<std::size_t>& argmax);
void maxpool2d_backward(const Pool2dGeometry& g, const double* out_grad,
                        const std::vector<std::size_t>& argmax, double* input_grad);

namespace reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);

/// Direct seven-loop convolution.
void conv2d_forward(const Conv2dGeometry& g, const double* input, const double* weight,
                    const double* bias, double* out);
void conv2d_backward(const Conv2dGeometry& g, const double* input, const double* out_grad,
                     const double* weight, double* input_grad, double* weight_grad,
                     double* bias_grad);

void maxpool2d_forward(const Pool2dGeometry& g, const double* input, double* out);

}  // namespace reference

}  // namespace finreid::kernels
