// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cnl/kernels.hpp"

namespace {

namespace k = cnl::kernels;

std::vector<double> random_values(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 1);
    const auto b = random_values(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        Gemm(a, b, c, n, n, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <auto Im2col>
void BM_im2col(benchmark::State& state) {
    k::ConvGeometry g;
    g.batch = 8;
    g.height = g.width = static_cast<std::size_t>(state.range(0));
    g.channels = 16;
    g.kernel = 3;
    g.stride = 1;
    g.padding = 1;
    const auto x = random_values(g.batch * g.height * g.width * g.channels, 3);
    std::vector<double> cols(g.out_positions() * g.patch_size());
    for (auto _ : state) {
        Im2col(x, g, cols);
        benchmark::DoNotOptimize(cols.data());
    }
}

template <auto Col2im>
void BM_col2im(benchmark::State& state) {
    k::ConvGeometry g;
    g.batch = 8;
    g.height = g.width = static_cast<std::size_t>(state.range(0));
    g.channels = 16;
    g.kernel = 3;
    g.stride = 1;
    g.padding = 1;
    const auto cols = random_values(g.out_positions() * g.patch_size(), 4);
    std::vector<double> dx(g.batch * g.height * g.width * g.channels);
    for (auto _ : state) {
        Col2im(cols, g, dx);
        benchmark::DoNotOptimize(dx.data());
    }
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::parallel::gemm>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(128);
BENCHMARK(BM_gemm<k::parallel::gemm_nt>)->Name("gemm_nt/parallel")->Arg(128);
BENCHMARK(BM_gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(128);
BENCHMARK(BM_gemm<k::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Arg(128);
BENCHMARK(BM_im2col<k::serial::im2col>)->Name("im2col/serial")->Arg(16)->Arg(32);
BENCHMARK(BM_im2col<k::parallel::im2col>)->Name("im2col/parallel")->Arg(16)->Arg(32);
BENCHMARK(BM_col2im<k::serial::col2im>)->Name("col2im/serial")->Arg(16)->Arg(32);
BENCHMARK(BM_col2im<k::parallel::col2im>)->Name("col2im/parallel")->Arg(16)->Arg(32);

BENCHMARK_MAIN();
