// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Randomized finite-difference verification of the attention blocks: every input and
// every parameter group of nl_forward, nl_bi_forward and cnl_forward, under both
// affinity modes and both out-norm modes (batch statistics / running statistics).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnl/attention.hpp"

namespace cnl {

struct GradientCheck {
    std::string op;    // nl_forward | nl_bi_forward | cnl_forward
    std::string mode;  // dot-mean | softmax
    std::string norm;  // batch | running
    std::string wrt;   // input or parameter group
    std::uint64_t seed = 0;
    std::size_t elements = 0;
    double rel_error = 0.0;
    bool passed = false;
};

struct GradientSuiteOptions {
    std::uint64_t seed = 0;
    /// Random shape draws per (op, mode, norm) combination.
    std::size_t rounds = 3;
    std::vector<Affinity> modes{Affinity::dot_mean, Affinity::softmax};
    double threshold = 1e-4;
    double eps = 1e-5;
    /// Test hook: analytic gradients of this op are scaled by 1.01 before comparison.
    std::string corrupt_op;
};

/// Batch-statistics draws with a branch channel whose variance over positions is below
/// 1e-2 are redrawn.
std::vector<GradientCheck> run_gradient_suite(const GradientSuiteOptions& options);

}  // namespace cnl
