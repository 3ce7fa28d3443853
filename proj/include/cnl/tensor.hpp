// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major double tensors. No strides, no views: reshaping copies.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnl {

using Shape = std::vector<std::size_t>;

/// Raised for any extent mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    /// Matrix literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor scalar(double value) { return Tensor({1}, value); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at(std::size_t row, std::size_t col) const;
    double& at(std::size_t row, std::size_t col);

    std::size_t rows() const;
    std::size_t cols() const;

    /// Copy with a new shape of equal element count.
    Tensor reshaped(Shape shape) const;
    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace cnl
