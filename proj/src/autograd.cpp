// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cnl {

void Parameter::zero_grad() {
    if (grad.empty() || grad.shape() != value.shape()) {
        grad = Tensor(value.shape());
    } else {
        std::fill(grad.data().begin(), grad.data().end(), 0.0);
    }
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    return push(std::move(node));
}

Var Tape::param(Parameter& p) {
    Node node;
    node.value = p.value;
    node.requires_grad = true;
    node.param = &p;
    return push(std::move(node));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
    Node node;
    node.value = std::move(value);
    for (const Var& in : inputs) {
        if (in.tape_ != this) throw std::logic_error("op mixes variables from different tapes");
        node.requires_grad = node.requires_grad || requires_grad(in.id_);
    }
    if (node.requires_grad) node.backward = std::move(fn);
    return push(std::move(node));
}

std::span<double> Tape::adjoint_buffer(std::size_t id) {
    Node& node = nodes_[id];
    if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
    return node.grad;
}

void Tape::backward(Var output) {
    if (output.tape_ != this) throw std::logic_error("backward: variable belongs to another tape");
    if (output.value().size() != 1) {
        throw ShapeError("backward needs a scalar output, got shape " + to_string(output.shape()));
    }
    for (Node& node : nodes_) node.grad.clear();
    visits_ = 0;
    if (!requires_grad(output.id_)) return;

    adjoint_buffer(output.id_)[0] = 1.0;
    for (std::size_t id = output.id_ + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.backward || node.grad.empty()) continue;
        node.backward(*this, id);
        ++visits_;
    }
    for (Node& node : nodes_) {
        if (!node.param || node.grad.empty()) continue;
        Parameter& p = *node.param;
        if (p.grad.empty() || p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
        for (std::size_t i = 0; i < node.grad.size(); ++i) p.grad[i] += node.grad[i];
    }
}

Tensor Tape::grad(Var v) const {
    const Node& node = nodes_.at(v.id_);
    if (node.grad.empty()) return Tensor(node.value.shape());
    return Tensor(node.value.shape(), node.grad);
}

// ---- helpers ----------------------------------------------------------------

namespace {

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

// Adds `src` into the adjoint of input `id` if that input wants a gradient.
template <typename F>
void accumulate(Tape& tape, std::size_t id, F&& body) {
    if (!tape.requires_grad(id)) return;
    body(tape.adjoint_buffer(id));
}

}  // namespace

// ---- ops --------------------------------------------------------------------

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_matrix(av, "matmul");
    require_matrix(bv, "matmul");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) {
        throw ShapeError("matmul: inner extents differ, " + to_string(av.shape()) + " x " + to_string(bv.shape()));
    }
    Tensor out({m, n});
    kernels::gemm(av.data(), bv.data(), out.data(), m, k, n);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        // dA = dY · Bᵀ, dB = Aᵀ · dY
        accumulate(t, ia, [&](std::span<double> da) { kernels::gemm_nt(dy, t.value(ib).data(), da, m, n, k, true); });
        accumulate(t, ib, [&](std::span<double> db) { kernels::gemm_tn(t.value(ia).data(), dy, db, k, m, n, true); });
    });
}

Var matmul_nt(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_matrix(av, "matmul_nt");
    require_matrix(bv, "matmul_nt");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    if (bv.cols() != k) {
        throw ShapeError("matmul_nt: inner extents differ, " + to_string(av.shape()) + " x " +
                         to_string(bv.shape()) + "^T");
    }
    Tensor out({m, n});
    kernels::gemm_nt(av.data(), bv.data(), out.data(), m, k, n);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        // dA = dY · B, dB = dYᵀ · A
        accumulate(t, ia, [&](std::span<double> da) { kernels::gemm(dy, t.value(ib).data(), da, m, n, k, true); });
        accumulate(t, ib, [&](std::span<double> db) { kernels::gemm_tn(dy, t.value(ia).data(), db, n, m, k, true); });
    });
}

Var add(Var a, Var b) {
    require_same(a.value(), b.value(), "add");
    Tensor out = a.value();
    const auto bv = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        for (std::size_t id : {ia, ib}) {
            accumulate(t, id, [&](std::span<double> d) {
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
            });
        }
    });
}

Var sub(Var a, Var b) {
    require_same(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const auto bv = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ia, [&](std::span<double> d) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
        });
        accumulate(t, ib, [&](std::span<double> d) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= dy[i];
        });
    });
}

Var mul(Var a, Var b) {
    require_same(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const auto bv = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ia, [&](std::span<double> d) {
            const auto other = t.value(ib).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * other[i];
        });
        accumulate(t, ib, [&](std::span<double> d) {
            const auto other = t.value(ia).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * other[i];
        });
    });
}

Var scale(Var a, double s) {
    Tensor out = a.value();
    for (double& v : out.data()) v *= s;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ia, [&](std::span<double> d) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * dy[i];
        });
    });
}

Var relu(Var a) {
    Tensor out = a.value();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ia, [&](std::span<double> d) {
            const auto x = t.value(ia).data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (x[i] > 0.0) d[i] += dy[i];
            }
        });
    });
}

Var sum(Var a) {
    double total = 0.0;
    for (double v : a.value().data()) total += v;
    const std::size_t ia = a.id();
    return a.tape().record(Tensor::scalar(total), {a}, [ia](Tape& t, std::size_t self) {
        const double g = t.adjoint(self)[0];
        accumulate(t, ia, [&](std::span<double> d) {
            for (double& v : d) v += g;
        });
    });
}

Var add_bias(Var x, Var b) {
    const Tensor& xv = x.value();
    require_matrix(xv, "add_bias");
    const std::size_t n = xv.rows(), c = xv.cols();
    if (b.value().size() != c) {
        throw ShapeError("add_bias: bias " + to_string(b.shape()) + " for " + to_string(xv.shape()));
    }
    Tensor out = xv;
    const auto bv = b.value().data();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] += bv[j];
    }
    const std::size_t ix = x.id(), ib = b.id();
    return x.tape().record(std::move(out), {x, b}, [ix, ib, n, c](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ix, [&](std::span<double> d) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
        });
        accumulate(t, ib, [&](std::span<double> d) {
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t j = 0; j < c; ++j) d[j] += dy[r * c + j];
            }
        });
    });
}

Var channel_affine(Var x, Var scale_v, Var shift_v) {
    const Tensor& xv = x.value();
    require_matrix(xv, "channel_affine");
    const std::size_t n = xv.rows(), c = xv.cols();
    if (scale_v.value().size() != c || shift_v.value().size() != c) {
        throw ShapeError("channel_affine: per-channel parameters must have " + std::to_string(c) + " entries");
    }
    Tensor out = xv;
    const auto s = scale_v.value().data();
    const auto h = shift_v.value().data();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] * s[j] + h[j];
    }
    const std::size_t ix = x.id(), is = scale_v.id(), ih = shift_v.id();
    return x.tape().record(std::move(out), {x, scale_v, shift_v}, [ix, is, ih, n, c](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ix, [&](std::span<double> d) {
            const auto s = t.value(is).data();
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t j = 0; j < c; ++j) d[r * c + j] += dy[r * c + j] * s[j];
            }
        });
        accumulate(t, is, [&](std::span<double> d) {
            const auto xs = t.value(ix).data();
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t j = 0; j < c; ++j) d[j] += dy[r * c + j] * xs[r * c + j];
            }
        });
        accumulate(t, ih, [&](std::span<double> d) {
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t j = 0; j < c; ++j) d[j] += dy[r * c + j];
            }
        });
    });
}

void column_mean_var(const Tensor& x, std::vector<double>& mean, std::vector<double>& var) {
    require_matrix(x, "column_mean_var");
    const std::size_t n = x.rows(), c = x.cols();
    mean.assign(c, 0.0);
    var.assign(c, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) mean[j] += x[r * c + j];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
            const double d = x[r * c + j] - mean[j];
            var[j] += d * d;
        }
    }
    for (double& v : var) v /= static_cast<double>(n);
}

Var standardize_columns(Var x, double eps) {
    const Tensor& xv = x.value();
    require_matrix(xv, "standardize_columns");
    const std::size_t n = xv.rows(), c = xv.cols();
    std::vector<double> mean, var;
    column_mean_var(xv, mean, var);
    std::vector<double> inv_std(c);
    for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    Tensor out({n, c});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = (xv[r * c + j] - mean[j]) * inv_std[j];
    }
    const std::size_t ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix, n, c, inv_std](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        const auto xhat = t.value(self).data();
        std::vector<double> mean_dy(c, 0.0), mean_dy_xhat(c, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                mean_dy[j] += dy[r * c + j];
                mean_dy_xhat[j] += dy[r * c + j] * xhat[r * c + j];
            }
        }
        for (std::size_t j = 0; j < c; ++j) {
            mean_dy[j] /= static_cast<double>(n);
            mean_dy_xhat[j] /= static_cast<double>(n);
        }
        accumulate(t, ix, [&](std::span<double> d) {
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t j = 0; j < c; ++j) {
                    const std::size_t i = r * c + j;
                    d[i] += inv_std[j] * (dy[i] - mean_dy[j] - xhat[i] * mean_dy_xhat[j]);
                }
            }
        });
    });
}

Var row_softmax(Var x) {
    const Tensor& xv = x.value();
    require_matrix(xv, "row_softmax");
    const std::size_t n = xv.rows(), c = xv.cols();
    Tensor out({n, c});
    for (std::size_t r = 0; r < n; ++r) {
        const double* in = xv.data().data() + r * c;
        double* y = out.data().data() + r * c;
        const double peak = *std::max_element(in, in + c);
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            y[j] = std::exp(in[j] - peak);
            total += y[j];
        }
        for (std::size_t j = 0; j < c; ++j) y[j] /= total;
    }
    const std::size_t ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix, n, c](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        const auto y = t.value(self).data();
        accumulate(t, ix, [&](std::span<double> d) {
            for (std::size_t r = 0; r < n; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += dy[r * c + j] * y[r * c + j];
                for (std::size_t j = 0; j < c; ++j) d[r * c + j] += y[r * c + j] * (dy[r * c + j] - dot);
            }
        });
    });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    const std::size_t ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ix, [&](std::span<double> d) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
        });
    });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
    const Tensor& xv = x.value();
    require_matrix(xv, "slice_rows");
    if (begin >= end || end > xv.rows()) {
        throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                         to_string(xv.shape()));
    }
    const std::size_t c = xv.cols();
    std::vector<double> data(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                             xv.data().begin() + static_cast<std::ptrdiff_t>(end * c));
    const std::size_t ix = x.id();
    return x.tape().record(Tensor({end - begin, c}, std::move(data)), {x}, [ix, begin, c](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ix, [&](std::span<double> d) {
            for (std::size_t i = 0; i < dy.size(); ++i) d[begin * c + i] += dy[i];
        });
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
    const std::size_t c = parts.front().value().cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (p.value().cols() != c) throw ShapeError("concat_rows: column counts differ");
        rows += p.value().rows();
    }
    std::vector<double> data;
    data.reserve(rows * c);
    std::vector<std::size_t> ids;
    std::vector<std::size_t> offsets;
    for (const Var& p : parts) {
        offsets.push_back(data.size());
        ids.push_back(p.id());
        data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    }
    return parts.front().tape().record(Tensor({rows, c}, std::move(data)), parts,
                                       [ids, offsets](Tape& t, std::size_t self) {
                                           auto dy = t.adjoint(self);
                                           for (std::size_t p = 0; p < ids.size(); ++p) {
                                               accumulate(t, ids[p], [&](std::span<double> d) {
                                                   for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[offsets[p] + i];
                                               });
                                           }
                                       });
}

Var im2col(Var x, std::size_t kernel, std::size_t stride, std::size_t padding) {
    const Tensor& xv = x.value();
    if (xv.rank() != 4) throw ShapeError("im2col: expected [B,H,W,C], got " + to_string(xv.shape()));
    kernels::ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), kernel, stride, padding};
    if (kernel == 0 || stride == 0 || g.height + 2 * padding < kernel || g.width + 2 * padding < kernel) {
        throw ShapeError("im2col: kernel " + std::to_string(kernel) + " does not fit " + to_string(xv.shape()));
    }
    Tensor out({g.out_positions(), g.patch_size()});
    kernels::im2col(xv.data(), g, out.data());
    const std::size_t ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix, g](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ix, [&](std::span<double> d) { kernels::col2im(dy, g, d); });
    });
}

Var group_mean_rows(Var x, std::size_t groups) {
    const Tensor& xv = x.value();
    require_matrix(xv, "group_mean_rows");
    if (groups == 0 || xv.rows() % groups != 0) {
        throw ShapeError("group_mean_rows: " + std::to_string(xv.rows()) + " rows into " + std::to_string(groups) +
                         " groups");
    }
    const std::size_t per = xv.rows() / groups, c = xv.cols();
    const double inv = 1.0 / static_cast<double>(per);
    Tensor out({groups, c});
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t r = 0; r < per; ++r) {
            for (std::size_t j = 0; j < c; ++j) out[g * c + j] += xv[(g * per + r) * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[g * c + j] *= inv;
    }
    const std::size_t ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix, groups, per, c, inv](Tape& t, std::size_t self) {
        auto dy = t.adjoint(self);
        accumulate(t, ix, [&](std::span<double> d) {
            for (std::size_t g = 0; g < groups; ++g) {
                for (std::size_t r = 0; r < per; ++r) {
                    for (std::size_t j = 0; j < c; ++j) d[(g * per + r) * c + j] += dy[g * c + j] * inv;
                }
            }
        });
    });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    const Tensor& lv = logits.value();
    require_matrix(lv, "softmax_cross_entropy");
    const std::size_t b = lv.rows(), k = lv.cols();
    if (labels.size() != b) throw ShapeError("softmax_cross_entropy: one label per row required");
    Tensor probs({b, k});
    double loss = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        const int label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= k) {
            throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " out of range");
        }
        const double* in = lv.data().data() + r * k;
        const double peak = *std::max_element(in, in + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += std::exp(in[j] - peak);
        const double log_total = std::log(total) + peak;
        for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(in[j] - log_total);
        loss += log_total - in[label];
    }
    loss /= static_cast<double>(b);
    std::vector<int> targets(labels.begin(), labels.end());
    const std::size_t il = logits.id();
    return logits.tape().record(Tensor::scalar(loss), {logits},
                                [il, b, k, probs = std::move(probs), targets = std::move(targets)](Tape& t,
                                                                                                   std::size_t self) {
                                    const double g = t.adjoint(self)[0] / static_cast<double>(b);
                                    accumulate(t, il, [&](std::span<double> d) {
                                        for (std::size_t r = 0; r < b; ++r) {
                                            for (std::size_t j = 0; j < k; ++j) {
                                                const double onehot = static_cast<int>(j) == targets[r] ? 1.0 : 0.0;
                                                d[r * k + j] += g * (probs[r * k + j] - onehot);
                                            }
                                        }
                                    });
                                });
}

}  // namespace cnl
