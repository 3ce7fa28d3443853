// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over a Wengert list.
//
// Every op appends one node to a Tape holding its (immutable) value and, when any
// input requires a gradient, a closure that pushes the node's adjoint back to its
// inputs. Tape::backward() walks the list once in reverse; adjoints accumulate
// additively, so fan-out needs no special handling.
//
// A Tape is confined to one thread. Vars are cheap handles (tape pointer + index)
// and must not outlive their tape.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "cnl/kernels.hpp"
#include "cnl/tensor.hpp"

namespace cnl {

/// A learnable tensor and its accumulated gradient.
struct Parameter {
    Tensor value;
    Tensor grad;

    Parameter() = default;
    explicit Parameter(Tensor v) : value(std::move(v)), grad(value.shape()) {}

    void zero_grad();
};

class Tape;

class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    std::size_t id() const { return id_; }
    Tape& tape() const { return *tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var leaf(Tensor value, bool requires_grad = true);
    /// Leaf whose gradient is added into p.grad when backward() runs.
    Var param(Parameter& p);

    /// Appends an op result. `fn` is dropped when no input requires a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

    /// Seeds d(output)/d(output) = 1 and replays the tape in reverse.
    /// Throws ShapeError when output is not a single element.
    void backward(Var output);

    /// Gradient of the last backward() output w.r.t. v (zeros when v got none).
    Tensor grad(Var v) const;

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::span<const double> adjoint(std::size_t id) const { return nodes_[id].grad; }
    /// Adjoint buffer of node `id`, zero-allocated on first use.
    std::span<double> adjoint_buffer(std::size_t id);

    std::size_t size() const { return nodes_.size(); }
    /// Number of recorded closures executed by the last backward().
    std::size_t backward_visits() const { return visits_; }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    Var push(Node node);

    std::deque<Node> nodes_;
    std::size_t visits_ = 0;
};

// ---- primitive ops --------------------------------------------------------

Var matmul(Var a, Var b);     ///< a[m,k] · b[k,n]
Var matmul_nt(Var a, Var b);  ///< a[m,k] · b[n,k]ᵀ
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  ///< elementwise
Var scale(Var a, double s);
Var relu(Var a);  ///< relu'(0) = 0
Var sum(Var a);   ///< -> [1]

/// x[n,c] + b[c] on every row.
Var add_bias(Var x, Var b);
/// x[n,c] * scale[c] + shift[c] on every row.
Var channel_affine(Var x, Var scale, Var shift);
/// Per-column (x - mean) / sqrt(var + eps), biased variance over rows.
Var standardize_columns(Var x, double eps);
Var row_softmax(Var x);

Var reshape(Var x, Shape shape);  ///< copy
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);

/// x[B,H,W,C] -> patches [B·Ho·Wo, k·k·C].
Var im2col(Var x, std::size_t kernel, std::size_t stride, std::size_t padding);
/// x[G·P, C] -> [G, C], the mean of each consecutive block of P rows.
Var group_mean_rows(Var x, std::size_t groups);
/// Mean softmax cross-entropy of logits[B,K] against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

/// Column means and biased variances of a [n,c] matrix.
void column_mean_var(const Tensor& x, std::vector<double>& mean, std::vector<double>& var);

}  // namespace cnl
