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

#include <limits>

#include "finreid/kernels.hpp"

namespace finreid::kernels::reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const double bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        s += av * bv;
      }
      c[i * ldc + j] = (beta == 0.0 ? 0.0 : beta * c[i * ldc + j]) + alpha * s;
    }
  }
}

namespace {
// Returns the input value feeding output (y, x) through tap (ky, kx), or
// nothing when the tap lands in the zero padding.
bool tap(const Conv2dGeometry& g, std::size_t y, std::size_t x, std::size_t ky, std::size_t kx,
         std::size_t& sy, std::size_t& sx) {
  const long py = static_cast<long>(y * g.stride + ky) - static_cast<long>(g.padding);
  const long px = static_cast<long>(x * g.stride + kx) - static_cast<long>(g.padding);
  if (py < 0 || px < 0 || py >= static_cast<long>(g.in_h) || px >= static_cast<long>(g.in_w))
    return false;
  sy = static_cast<std::size_t>(py);
  sx = static_cast<std::size_t>(px);
  return true;
}
}  // namespace

void conv2d_forward(const Conv2dGeometry& g, const double* input, const double* weight,
                    const double* bias, double* out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double s = bias ? bias[o] : 0.0;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                std::size_t sy, sx;
                if (!tap(g, y, x, ky, kx, sy, sx)) continue;
                s += input[((n * g.in_channels + c) * g.in_h + sy) * g.in_w + sx] *
                     weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
              }
          out[((n * g.out_channels + o) * oh + y) * ow + x] = s;
        }
}

void conv2d_backward(const Conv2dGeometry& g, const double* input, const double* out_grad,
                     const double* weight, double* input_grad, double* weight_grad,
                     double* bias_grad) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double go = out_grad[((n * g.out_channels + o) * oh + y) * ow + x];
          if (bias_grad) bias_grad[o] += go;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                std::size_t sy, sx;
                if (!tap(g, y, x, ky, kx, sy, sx)) continue;
                const std::size_t ii = ((n * g.in_channels + c) * g.in_h + sy) * g.in_w + sx;
                const std::size_t wi = ((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx;
                if (input_grad) input_grad[ii] += go * weight[wi];
                if (weight_grad) weight_grad[wi] += go * input[ii];
              }
        }
}

void maxpool2d_forward(const Pool2dGeometry& g, const double* input, double* out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t pl = 0; pl < g.batch * g.channels; ++pl)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t wy = 0; wy < g.window; ++wy)
          for (std::size_t wx = 0; wx < g.window; ++wx) {
            const double v =
                input[(pl * g.in_h + y * g.stride + wy) * g.in_w + x * g.stride + wx];
            if (v > best) best = v;
          }
        out[(pl * oh + y) * ow + x] = best;
      }
}

}  // namespace finreid::kernels::reference
