// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernel_rows.hpp"

#include <string>

#include "cnl/tensor.hpp"

namespace cnl::kernels {

namespace detail {

void check_gemm(std::size_t a, std::size_t b, std::size_t c, std::size_t m, std::size_t k, std::size_t n) {
    if (a != m * k || b != k * n || c != m * n) {
        throw ShapeError("gemm buffer sizes do not match m=" + std::to_string(m) + " k=" + std::to_string(k) +
                         " n=" + std::to_string(n));
    }
}

void check_conv(std::size_t x, std::size_t cols, const ConvGeometry& g) {
    if (g.kernel == 0 || g.stride == 0 || g.height + 2 * g.padding < g.kernel ||
        g.width + 2 * g.padding < g.kernel) {
        throw ShapeError("invalid convolution geometry");
    }
    if (x != g.batch * g.height * g.width * g.channels || cols != g.out_positions() * g.patch_size()) {
        throw ShapeError("im2col buffer sizes do not match geometry");
    }
}

}  // namespace detail

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
    detail::check_gemm(a.size(), b.size(), c.size(), m, k, n);
    for (std::size_t i = 0; i < m; ++i) detail::gemm_row(a.data(), b.data(), c.data(), i, k, n, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
    detail::check_gemm(a.size(), b.size(), c.size(), m, k, n);
    for (std::size_t i = 0; i < m; ++i) detail::gemm_nt_row(a.data(), b.data(), c.data(), i, k, n, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
    detail::check_gemm(a.size(), b.size(), c.size(), m, k, n);
    for (std::size_t i = 0; i < m; ++i) {
        detail::gemm_tn_row(a.data(), b.data(), c.data(), i, m, k, n, accumulate);
    }
}

void im2col(std::span<const double> x, const ConvGeometry& g, std::span<double> cols) {
    detail::check_conv(x.size(), cols.size(), g);
    const std::size_t rows = g.out_positions();
    for (std::size_t r = 0; r < rows; ++r) detail::im2col_row(x.data(), g, cols.data(), r);
}

void col2im(std::span<const double> cols, const ConvGeometry& g, std::span<double> dx) {
    detail::check_conv(dx.size(), cols.size(), g);
    const std::size_t rows = g.out_positions();
    for (std::size_t r = 0; r < rows; ++r) detail::col2im_row(cols.data(), g, dx.data(), r);
}

}  // namespace serial
}  // namespace cnl::kernels
