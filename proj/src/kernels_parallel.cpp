// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernel_rows.hpp"

#include <cstdint>

#ifdef CNL_HAVE_OPENMP
#include <omp.h>
#endif

namespace cnl::kernels {

namespace {

// Below this many multiply-adds a fork/join costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

using Index = std::int64_t;

}  // namespace

namespace parallel {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
    detail::check_gemm(a.size(), b.size(), c.size(), m, k, n);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
        detail::gemm_row(pa, pb, pc, static_cast<std::size_t>(i), k, n, accumulate);
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
    detail::check_gemm(a.size(), b.size(), c.size(), m, k, n);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
        detail::gemm_nt_row(pa, pb, pc, static_cast<std::size_t>(i), k, n, accumulate);
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
    detail::check_gemm(a.size(), b.size(), c.size(), m, k, n);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
        detail::gemm_tn_row(pa, pb, pc, static_cast<std::size_t>(i), m, k, n, accumulate);
    }
}

void im2col(std::span<const double> x, const ConvGeometry& g, std::span<double> cols) {
    detail::check_conv(x.size(), cols.size(), g);
    const double* px = x.data();
    double* pc = cols.data();
    const auto rows = static_cast<Index>(g.out_positions());
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < rows; ++r) detail::im2col_row(px, g, pc, static_cast<std::size_t>(r));
}

void col2im(std::span<const double> cols, const ConvGeometry& g, std::span<double> dx) {
    detail::check_conv(dx.size(), cols.size(), g);
    const double* pc = cols.data();
    double* pd = dx.data();
    const std::size_t per_image = g.out_height() * g.out_width();
    // Patches overlap inside an image, so split across images only.
#pragma omp parallel for schedule(static)
    for (Index b = 0; b < static_cast<Index>(g.batch); ++b) {
        const std::size_t first = static_cast<std::size_t>(b) * per_image;
        for (std::size_t r = first; r < first + per_image; ++r) detail::col2im_row(pc, g, pd, r);
    }
}

}  // namespace parallel

bool parallel_available() {
#ifdef CNL_HAVE_OPENMP
    return true;
#else
    return false;
#endif
}

int max_threads() {
#ifdef CNL_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace {

bool use_parallel(std::size_t work) { return parallel_available() && max_threads() > 1 && work >= kParallelWork; }

}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
    if (use_parallel(m * k * n)) {
        parallel::gemm(a, b, c, m, k, n, accumulate);
    } else {
        serial::gemm(a, b, c, m, k, n, accumulate);
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
    if (use_parallel(m * k * n)) {
        parallel::gemm_nt(a, b, c, m, k, n, accumulate);
    } else {
        serial::gemm_nt(a, b, c, m, k, n, accumulate);
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
    if (use_parallel(m * k * n)) {
        parallel::gemm_tn(a, b, c, m, k, n, accumulate);
    } else {
        serial::gemm_tn(a, b, c, m, k, n, accumulate);
    }
}

void im2col(std::span<const double> x, const ConvGeometry& g, std::span<double> cols) {
    if (use_parallel(cols.size())) {
        parallel::im2col(x, g, cols);
    } else {
        serial::im2col(x, g, cols);
    }
}

void col2im(std::span<const double> cols, const ConvGeometry& g, std::span<double> dx) {
    if (use_parallel(cols.size()) && g.batch > 1) {
        parallel::col2im(cols, g, dx);
    } else {
        serial::col2im(cols, g, dx);
    }
}

}  // namespace cnl::kernels
