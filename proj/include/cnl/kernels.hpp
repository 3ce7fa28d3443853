// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Inner loops for the dense ops. Two implementations with one contract:
//
//   serial::   plain loops, kept as the reference the parallel path is tested against.
//   parallel:: OpenMP over independent output rows / images. Every output element is
//              produced by exactly one thread in the same summation order as the serial
//              loop, so both paths agree bit-for-bit at any thread count.
//
// The unqualified functions dispatch to parallel:: when OpenMP is available and the
// problem is large enough to be worth a fork/join, else to serial::.

#pragma once

#include <cstddef>
#include <span>

namespace cnl::kernels {

/// NHWC input geometry for a square-kernel convolution lowered through im2col.
struct ConvGeometry {
    std::size_t batch = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t channels = 1;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
    std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
    std::size_t patch_size() const { return kernel * kernel * channels; }
    std::size_t out_positions() const { return batch * out_height() * out_width(); }
};

// Matrices are row-major. Shapes: a[m,k] b[k,n] c[m,n]; "nt" reads b as [n,k]
// (c = a·bᵀ), "tn" reads a as [k,m] (c = aᵀ·b). With accumulate=false c is overwritten.

namespace serial {
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void im2col(std::span<const double> x, const ConvGeometry& g, std::span<double> cols);
/// Adjoint of im2col; adds into dx.
void col2im(std::span<const double> cols, const ConvGeometry& g, std::span<double> dx);
}  // namespace serial

namespace parallel {
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void im2col(std::span<const double> x, const ConvGeometry& g, std::span<double> cols);
void col2im(std::span<const double> cols, const ConvGeometry& g, std::span<double> dx);
}  // namespace parallel

bool parallel_available();
int max_threads();

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void im2col(std::span<const double> x, const ConvGeometry& g, std::span<double> cols);
void col2im(std::span<const double> cols, const ConvGeometry& g, std::span<double> dx);

}  // namespace cnl::kernels
