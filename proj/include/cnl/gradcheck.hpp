// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "cnl/tensor.hpp"

namespace cnl {

/// Central differences (f(x + eps·e_i) - f(x - eps·e_i)) / (2·eps) for every coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
///
/// `floor` keeps coordinates whose true derivative is ~0 from turning roundoff in the
/// central difference into a huge ratio; below it the measure is an absolute error.
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-5);

}  // namespace cnl
