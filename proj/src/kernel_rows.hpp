// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-row bodies shared by the serial and parallel kernels. Keeping a single body
// per output row is what makes the two paths bitwise identical.

#pragma once

#include <cstddef>
#include <span>

#include "cnl/kernels.hpp"

namespace cnl::kernels::detail {

// c[j0, j0+W) += Σ_t a(t)·b[t, j0..] with the partial sums held in registers. Every
// output element still accumulates over t in increasing order.
template <std::size_t W, typename A>
inline void gemm_block(A a_at, const double* b, double* crow, std::size_t j0, std::size_t k, std::size_t n,
                       bool accumulate) {
    double acc[W];
    for (std::size_t j = 0; j < W; ++j) acc[j] = accumulate ? crow[j0 + j] : 0.0;
    for (std::size_t t = 0; t < k; ++t) {
        const double av = a_at(t);
        const double* brow = b + t * n + j0;
        for (std::size_t j = 0; j < W; ++j) acc[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < W; ++j) crow[j0 + j] = acc[j];
}

template <typename A>
inline void gemm_row_blocks(A a_at, const double* b, double* crow, std::size_t k, std::size_t n, bool accumulate) {
    std::size_t j0 = 0;
    for (; j0 + 8 <= n; j0 += 8) gemm_block<8>(a_at, b, crow, j0, k, n, accumulate);
    if (j0 + 4 <= n) {
        gemm_block<4>(a_at, b, crow, j0, k, n, accumulate);
        j0 += 4;
    }
    for (; j0 < n; ++j0) gemm_block<1>(a_at, b, crow, j0, k, n, accumulate);
}

inline void gemm_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                     std::size_t n, bool accumulate) {
    const double* arow = a + i * k;
    gemm_row_blocks([arow](std::size_t t) { return arow[t]; }, b, c + i * n, k, n, accumulate);
}

inline void gemm_nt_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                        std::size_t n, bool accumulate) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += arow[t] * brow[t];
        crow[j] = accumulate ? crow[j] + s : s;
    }
}

inline void gemm_tn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t m,
                        std::size_t k, std::size_t n, bool accumulate) {
    gemm_row_blocks([a, i, m](std::size_t t) { return a[t * m + i]; }, b, c + i * n, k, n, accumulate);
}

inline void im2col_row(const double* x, const ConvGeometry& g, double* cols, std::size_t row) {
    const std::size_t ow = g.out_width();
    const std::size_t oh = g.out_height();
    const std::size_t b = row / (oh * ow);
    const std::size_t oy = (row / ow) % oh;
    const std::size_t ox = row % ow;
    double* out = cols + row * g.patch_size();
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            double* dst = out + (ky * g.kernel + kx) * g.channels;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) || ix >= static_cast<long>(g.width)) {
                for (std::size_t c = 0; c < g.channels; ++c) dst[c] = 0.0;
                continue;
            }
            const double* src = x + ((b * g.height + static_cast<std::size_t>(iy)) * g.width +
                                     static_cast<std::size_t>(ix)) * g.channels;
            for (std::size_t c = 0; c < g.channels; ++c) dst[c] = src[c];
        }
    }
}

inline void col2im_row(const double* cols, const ConvGeometry& g, double* dx, std::size_t row) {
    const std::size_t ow = g.out_width();
    const std::size_t oh = g.out_height();
    const std::size_t b = row / (oh * ow);
    const std::size_t oy = (row / ow) % oh;
    const std::size_t ox = row % ow;
    const double* in = cols + row * g.patch_size();
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
        if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            const double* src = in + (ky * g.kernel + kx) * g.channels;
            double* dst = dx + ((b * g.height + static_cast<std::size_t>(iy)) * g.width +
                                static_cast<std::size_t>(ix)) * g.channels;
            for (std::size_t c = 0; c < g.channels; ++c) dst[c] += src[c];
        }
    }
}

void check_gemm(std::size_t a, std::size_t b, std::size_t c, std::size_t m, std::size_t k, std::size_t n);
void check_conv(std::size_t x, std::size_t cols, const ConvGeometry& g);

}  // namespace cnl::kernels::detail
