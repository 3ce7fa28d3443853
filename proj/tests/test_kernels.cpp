// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "cnl/kernels.hpp"
#include "test_util.hpp"

#ifdef CNL_HAVE_OPENMP
#include <omp.h>
#endif

namespace cnl {
namespace {

using testing::pick;

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

std::vector<double> random_ints(std::size_t n, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dist(-5, 5);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

// Thread counts to exercise; on a single core the extra threads still interleave.
std::vector<int> thread_counts() {
#ifdef CNL_HAVE_OPENMP
    return {1, 2, 3, 4};
#else
    return {1};
#endif
}

void set_threads([[maybe_unused]] int n) {
#ifdef CNL_HAVE_OPENMP
    omp_set_num_threads(n);
#endif
}

struct GemmCase {
    std::size_t m, k, n;
};

std::vector<GemmCase> gemm_cases(std::mt19937_64& rng) {
    std::vector<GemmCase> cases = {{1, 1, 1}, {1, 7, 1}, {9, 1, 13}, {64, 33, 17}, {3, 200, 5}, {130, 12, 9}};
    for (int i = 0; i < 20; ++i) cases.push_back({pick(rng, 1, 40), pick(rng, 1, 40), pick(rng, 1, 40)});
    return cases;
}

TEST(Kernels, GemmMatchesTripleLoopOnIntegers) {
    std::mt19937_64 rng(11);
    for (const auto& [m, k, n] : gemm_cases(rng)) {
        const auto a = random_ints(m * k, rng), b = random_ints(k * n, rng);
        std::vector<double> expect(m * n, 0.0), nt_expect(m * n, 0.0), tn_expect(m * n, 0.0);
        // b viewed as [n,k] for nt, a viewed as [k,m] for tn.
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t t = 0; t < k; ++t) {
                    expect[i * n + j] += a[i * k + t] * b[t * n + j];
                    nt_expect[i * n + j] += a[i * k + t] * b[j * k + t];
                    tn_expect[i * n + j] += a[t * m + i] * b[t * n + j];
                }
        for (auto* impl : {&kernels::serial::gemm, &kernels::parallel::gemm, &kernels::gemm}) {
            std::vector<double> c(m * n, 99.0);
            impl(a, b, c, m, k, n, false);
            EXPECT_EQ(c, expect) << m << "x" << k << "x" << n;
        }
        for (auto* impl : {&kernels::serial::gemm_nt, &kernels::parallel::gemm_nt, &kernels::gemm_nt}) {
            std::vector<double> c(m * n, 99.0);
            impl(a, b, c, m, k, n, false);
            EXPECT_EQ(c, nt_expect);
        }
        for (auto* impl : {&kernels::serial::gemm_tn, &kernels::parallel::gemm_tn, &kernels::gemm_tn}) {
            std::vector<double> c(m * n, 99.0);
            impl(a, b, c, m, k, n, false);
            EXPECT_EQ(c, tn_expect);
        }
    }
}

TEST(Kernels, GemmAccumulateAdds) {
    std::mt19937_64 rng(2);
    const auto a = random_ints(6, rng), b = random_ints(6, rng);
    std::vector<double> c0(4, 0.0), c1(4, 1.0);
    kernels::gemm(a, b, c0, 2, 3, 2, false);
    kernels::gemm(a, b, c1, 2, 3, 2, true);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c1[i], c0[i] + 1.0);
}

TEST(Kernels, ParallelGemmIsBitwiseSerial) {
    std::mt19937_64 rng(5);
    for (const auto& [m, k, n] : gemm_cases(rng)) {
        const auto a = random_values(m * k, rng), b = random_values(k * n, rng);
        const auto seed = random_values(m * n, rng);
        for (bool acc : {false, true}) {
            std::vector<double> s1 = seed, s2 = seed, s3 = seed;
            kernels::serial::gemm(a, b, s1, m, k, n, acc);
            kernels::serial::gemm_nt(a, b, s2, m, k, n, acc);
            kernels::serial::gemm_tn(a, b, s3, m, k, n, acc);
            for (int t : thread_counts()) {
                set_threads(t);
                std::vector<double> p1 = seed, p2 = seed, p3 = seed;
                kernels::parallel::gemm(a, b, p1, m, k, n, acc);
                kernels::parallel::gemm_nt(a, b, p2, m, k, n, acc);
                kernels::parallel::gemm_tn(a, b, p3, m, k, n, acc);
                EXPECT_EQ(p1, s1) << "threads " << t;
                EXPECT_EQ(p2, s2) << "threads " << t;
                EXPECT_EQ(p3, s3) << "threads " << t;
            }
        }
    }
    set_threads(kernels::max_threads());
}

std::vector<kernels::ConvGeometry> conv_cases(std::mt19937_64& rng) {
    std::vector<kernels::ConvGeometry> out = {{1, 3, 3, 1, 3, 1, 1}, {2, 8, 8, 3, 3, 2, 1}, {1, 7, 5, 2, 1, 1, 0}};
    for (int i = 0; i < 20; ++i) {
        kernels::ConvGeometry g;
        g.batch = pick(rng, 1, 3);
        g.height = pick(rng, 1, 9);
        g.width = pick(rng, 1, 9);
        g.channels = pick(rng, 1, 4);
        g.padding = pick(rng, 0, 2);
        g.kernel = pick(rng, 1, std::min(g.height, g.width) + 2 * g.padding);
        g.stride = pick(rng, 1, 3);
        out.push_back(g);
    }
    return out;
}

TEST(Kernels, Im2colMatchesDirectIndexing) {
    std::mt19937_64 rng(9);
    for (const auto& g : conv_cases(rng)) {
        const auto x = random_values(g.batch * g.height * g.width * g.channels, rng);
        std::vector<double> cols(g.out_positions() * g.patch_size());
        kernels::serial::im2col(x, g, cols);
        std::size_t row = 0;
        for (std::size_t b = 0; b < g.batch; ++b)
            for (std::size_t oy = 0; oy < g.out_height(); ++oy)
                for (std::size_t ox = 0; ox < g.out_width(); ++ox, ++row) {
                    std::size_t col = 0;
                    for (std::size_t ky = 0; ky < g.kernel; ++ky)
                        for (std::size_t kx = 0; kx < g.kernel; ++kx)
                            for (std::size_t c = 0; c < g.channels; ++c, ++col) {
                                const auto y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                                const auto xx = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                                double v = 0.0;
                                if (y >= 0 && xx >= 0 && y < static_cast<long>(g.height) &&
                                    xx < static_cast<long>(g.width)) {
                                    v = x[((b * g.height + static_cast<std::size_t>(y)) * g.width +
                                           static_cast<std::size_t>(xx)) *
                                              g.channels +
                                          c];
                                }
                                ASSERT_EQ(cols[row * g.patch_size() + col], v);
                            }
                }
    }
}

TEST(Kernels, Col2imIsTheAdjointOfIm2col) {
    // <im2col(x), y> = <x, col2im(y)> for all x, y; integers keep both sides exact.
    std::mt19937_64 rng(13);
    for (const auto& g : conv_cases(rng)) {
        const std::size_t nx = g.batch * g.height * g.width * g.channels;
        const std::size_t nc = g.out_positions() * g.patch_size();
        const auto x = random_ints(nx, rng), y = random_ints(nc, rng);
        std::vector<double> cols(nc), dx(nx, 0.0);
        kernels::im2col(x, g, cols);
        kernels::col2im(y, g, dx);
        double lhs = 0, rhs = 0;
        for (std::size_t i = 0; i < nc; ++i) lhs += cols[i] * y[i];
        for (std::size_t i = 0; i < nx; ++i) rhs += x[i] * dx[i];
        EXPECT_EQ(lhs, rhs);
    }
}

TEST(Kernels, ParallelIm2colAndCol2imAreBitwiseSerial) {
    std::mt19937_64 rng(17);
    for (const auto& g : conv_cases(rng)) {
        const std::size_t nx = g.batch * g.height * g.width * g.channels;
        const std::size_t nc = g.out_positions() * g.patch_size();
        const auto x = random_values(nx, rng), y = random_values(nc, rng);
        std::vector<double> sc(nc), sd(nx, 0.5);
        kernels::serial::im2col(x, g, sc);
        kernels::serial::col2im(y, g, sd);
        for (int t : thread_counts()) {
            set_threads(t);
            std::vector<double> pc(nc), pd(nx, 0.5);
            kernels::parallel::im2col(x, g, pc);
            kernels::parallel::col2im(y, g, pd);
            EXPECT_EQ(pc, sc);
            EXPECT_EQ(pd, sd);
        }
    }
    set_threads(kernels::max_threads());
}

}  // namespace
}  // namespace cnl
