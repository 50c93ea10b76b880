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

#include "finreid/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace finreid::kernels {

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;
constexpr std::size_t kDepthBlock = 256;

// Packs rows [k0, k0 + kc) of op(B) into 16-column panels of kc rows, zero
// padded. `first_panel` selects which panels to pack.
void pack_b(bool trans_b, std::size_t n, std::size_t k0, std::size_t kc, const double* b,
            std::size_t ldb, std::size_t first_panel, std::size_t panels, double* packed) {
#pragma omp parallel for schedule(static)
  for (std::size_t p = first_panel; p < panels; ++p) {
    double* dst = packed + (p - first_panel) * kc * kTileCols;
    const std::size_t j0 = p * kTileCols;
    const std::size_t width = std::min(kTileCols, n - j0);
    for (std::size_t kk = 0; kk < kc; ++kk) {
      double* row = dst + kk * kTileCols;
      if (trans_b) {
        for (std::size_t c = 0; c < width; ++c) row[c] = b[(j0 + c) * ldb + k0 + kk];
      } else {
        const double* src = b + (k0 + kk) * ldb + j0;
        for (std::size_t c = 0; c < width; ++c) row[c] = src[c];
      }
      for (std::size_t c = width; c < kTileCols; ++c) row[c] = 0.0;
    }
  }
}

// acc = A[Rows x kc] * panel[kc x 16]; panel rows are `ldp` apart.
template <std::size_t Rows>
inline void micro_tile(std::size_t kc, const double* a, std::size_t lda, const double* panel,
                       std::size_t ldp, double (&acc)[kTileRows][kTileCols]) {
  double t[Rows][kTileCols] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const double* brow = panel + p * ldp;
#pragma GCC unroll 4
    for (std::size_t r = 0; r < Rows; ++r) {
      const double av = a[r * lda + p];
#pragma omp simd
      for (std::size_t c = 0; c < kTileCols; ++c) t[r][c] += av * brow[c];
    }
  }
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t c = 0; c < kTileCols; ++c) acc[r][c] = t[r][c];
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = beta == 0.0 ? 0.0 : beta * c[i * ldc + j];
    return;
  }

  std::vector<double> a_packed;
  const double* a_rows = a;
  std::size_t a_ld = lda;
  if (trans_a) {
    a_packed.resize(m * k);
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t i = 0; i < m; ++i) a_packed[i * k + kk] = a[kk * lda + i];
    a_rows = a_packed.data();
    a_ld = k;
  }

  const std::size_t panels = (n + kTileCols - 1) / kTileCols;
  const std::size_t full_panels = n / kTileCols;
  // Row-major B is read in place for full panels; only transposed B and the
  // ragged last panel are packed.
  const std::size_t first_packed = trans_b ? 0 : full_panels;
  const std::size_t row_blocks = (m + kTileRows - 1) / kTileRows;
  const std::size_t kc_max = std::min(k, kDepthBlock);
  std::vector<double> b_packed((panels - first_packed) * kc_max * kTileCols);

  for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
    const std::size_t kc = std::min(kDepthBlock, k - k0);
    const bool first_block = k0 == 0;
    if (first_packed < panels)
      pack_b(trans_b, n, k0, kc, b, ldb, first_packed, panels, b_packed.data());

    const std::size_t tiles = row_blocks * panels;
#pragma omp parallel for schedule(static)
    for (std::size_t t = 0; t < tiles; ++t) {
      const std::size_t p = t / row_blocks;
      const std::size_t rb = t % row_blocks;
      const std::size_t i0 = rb * kTileRows;
      const std::size_t j0 = p * kTileCols;
      const std::size_t rows = std::min(kTileRows, m - i0);
      const std::size_t width = std::min(kTileCols, n - j0);
      const double* a_blk = a_rows + i0 * a_ld + k0;
      const double* panel;
      std::size_t ldp;
      if (p < first_packed) {
        panel = b + k0 * ldb + j0;
        ldp = ldb;
      } else {
        panel = b_packed.data() + (p - first_packed) * kc * kTileCols;
        ldp = kTileCols;
      }

      double acc[kTileRows][kTileCols];
      switch (rows) {
        case 4: micro_tile<4>(kc, a_blk, a_ld, panel, ldp, acc); break;
        case 3: micro_tile<3>(kc, a_blk, a_ld, panel, ldp, acc); break;
        case 2: micro_tile<2>(kc, a_blk, a_ld, panel, ldp, acc); break;
        default: micro_tile<1>(kc, a_blk, a_ld, panel, ldp, acc); break;
      }
      for (std::size_t r = 0; r < rows; ++r) {
        double* crow = c + (i0 + r) * ldc + j0;
        if (!first_block) {
          for (std::size_t cc = 0; cc < width; ++cc) crow[cc] += alpha * acc[r][cc];
        } else if (beta == 0.0) {
          for (std::size_t cc = 0; cc < width; ++cc) crow[cc] = alpha * acc[r][cc];
        } else {
          for (std::size_t cc = 0; cc < width; ++cc) crow[cc] = beta * crow[cc] + alpha * acc[r][cc];
        }
      }
    }
  }
}

void im2col(const Conv2dGeometry& g, const double* input, double* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t spatial = oh * ow;
  const std::size_t width = g.batch * spatial;
  const std::size_t rows = g.patch();
  const long pad = static_cast<long>(g.padding);
  const long ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);

#pragma omp parallel for schedule(static)
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t ch = row / (g.kernel_h * g.kernel_w);
    const std::size_t ky = (row / g.kernel_w) % g.kernel_h;
    const std::size_t kx = row % g.kernel_w;
    double* dst = cols + row * width;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const double* plane = input + (n * g.in_channels + ch) * g.in_h * g.in_w;
      double* out = dst + n * spatial;
      for (std::size_t y = 0; y < oh; ++y) {
        const long sy = static_cast<long>(y * g.stride + ky) - pad;
        if (sy < 0 || sy >= ih) {
          std::fill_n(out + y * ow, ow, 0.0);
          continue;
        }
        for (std::size_t x = 0; x < ow; ++x) {
          const long sx = static_cast<long>(x * g.stride + kx) - pad;
          out[y * ow + x] = (sx < 0 || sx >= iw) ? 0.0 : plane[sy * iw + sx];
        }
      }
    }
  }
}

void col2im(const Conv2dGeometry& g, const double* cols, double* input_grad) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t spatial = oh * ow;
  const std::size_t width = g.batch * spatial;
  const std::size_t kk = g.kernel_h * g.kernel_w;
  const long pad = static_cast<long>(g.padding);
  const long ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);

  // Each (image, channel) plane is written by one thread only.
#pragma omp parallel for schedule(static)
  for (std::size_t nc = 0; nc < g.batch * g.in_channels; ++nc) {
    const std::size_t n = nc / g.in_channels;
    const std::size_t ch = nc % g.in_channels;
    double* plane = input_grad + nc * g.in_h * g.in_w;
    for (std::size_t r = 0; r < kk; ++r) {
      const std::size_t ky = r / g.kernel_w, kx = r % g.kernel_w;
      const double* src = cols + (ch * kk + r) * width + n * spatial;
      for (std::size_t y = 0; y < oh; ++y) {
        const long sy = static_cast<long>(y * g.stride + ky) - pad;
        if (sy < 0 || sy >= ih) continue;
        for (std::size_t x = 0; x < ow; ++x) {
          const long sx = static_cast<long>(x * g.stride + kx) - pad;
          if (sx >= 0 && sx < iw) plane[sy * iw + sx] += src[y * ow + x];
        }
      }
    }
  }
}

void conv2d_forward(const Conv2dGeometry& g, const double* input, const double* weight,
                    const double* bias, double* out, std::vector<double>& cols) {
  const std::size_t spatial = g.out_h() * g.out_w();
  const std::size_t width = g.batch * spatial;
  cols.resize(g.patch() * width);
  im2col(g, input, cols.data());

  // [O, patch] x [patch, N*spatial] -> [O, N*spatial], then scatter to NCHW.
  std::vector<double> tmp(g.out_channels * width);
  gemm(false, false, g.out_channels, width, g.patch(), 1.0, weight, g.patch(), cols.data(), width,
       0.0, tmp.data(), width);

#pragma omp parallel for schedule(static)
  for (std::size_t no = 0; no < g.batch * g.out_channels; ++no) {
    const std::size_t n = no / g.out_channels, o = no % g.out_channels;
    const double* src = tmp.data() + o * width + n * spatial;
    double* dst = out + no * spatial;
    const double b = bias ? bias[o] : 0.0;
    for (std::size_t s = 0; s < spatial; ++s) dst[s] = src[s] + b;
  }
}

void conv2d_backward(const Conv2dGeometry& g, const double* out_grad,
                     const std::vector<double>& cols, const double* weight, double* input_grad,
                     double* weight_grad, double* bias_grad) {
  const std::size_t spatial = g.out_h() * g.out_w();
  const std::size_t width = g.batch * spatial;

  // Gather out_grad into [O, N*spatial] to match the column layout.
  std::vector<double> dout(g.out_channels * width);
#pragma omp parallel for schedule(static)
  for (std::size_t no = 0; no < g.batch * g.out_channels; ++no) {
    const std::size_t n = no / g.out_channels, o = no % g.out_channels;
    std::memcpy(dout.data() + o * width + n * spatial, out_grad + no * spatial,
                spatial * sizeof(double));
  }

  if (bias_grad) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      double s = 0.0;
      const double* row = dout.data() + o * width;
      for (std::size_t j = 0; j < width; ++j) s += row[j];
      bias_grad[o] += s;
    }
  }
  if (weight_grad) {
    gemm(false, true, g.out_channels, g.patch(), width, 1.0, dout.data(), width, cols.data(), width,
         1.0, weight_grad, g.patch());
  }
  if (input_grad) {
    std::vector<double> dcols(g.patch() * width);
    gemm(true, false, g.patch(), width, g.out_channels, 1.0, weight, g.patch(), dout.data(), width,
         0.0, dcols.data(), width);
    col2im(g, dcols.data(), input_grad);
  }
}

void maxpool2d_forward(const Pool2dGeometry& g, const double* input, double* out,
                       std::vector<std::size_t>& argmax) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t planes = g.batch * g.channels;
  argmax.resize(planes * oh * ow);
#pragma omp parallel for schedule(static)
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const std::size_t base = pl * g.in_h * g.in_w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = base;
        for (std::size_t wy = 0; wy < g.window; ++wy) {
          for (std::size_t wx = 0; wx < g.window; ++wx) {
            const std::size_t idx = base + (y * g.stride + wy) * g.in_w + (x * g.stride + wx);
            if (input[idx] > best) {
              best = input[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (pl * oh + y) * ow + x;
        out[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
}

void maxpool2d_backward(const Pool2dGeometry& g, const double* out_grad,
                        const std::vector<std::size_t>& argmax, double* input_grad) {
  // Windows may overlap when stride < window, so stay serial per plane.
  const std::size_t per_plane = g.out_h() * g.out_w();
  const std::size_t planes = g.batch * g.channels;
#pragma omp parallel for schedule(static)
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t o = pl * per_plane; o < (pl + 1) * per_plane; ++o)
      input_grad[argmax[o]] += out_grad[o];
}

}  // namespace finreid::kernels
