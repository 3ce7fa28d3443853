// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cnl {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double plus = f(probe);
        probe[i] = orig - eps;
        const double minus = f(probe);
        probe[i] = orig;
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    return grad;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
    if (!same_shape(analytic, numeric)) {
        throw ShapeError("max_relative_error: " + to_string(analytic.shape()) + " vs " + to_string(numeric.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i];
        const double n = numeric[i];
        const double denom = std::max({std::abs(a), std::abs(n), floor});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

}  // namespace cnl
