// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cnl/autograd.hpp"
#include "cnl/gradcheck.hpp"
#include "test_util.hpp"

namespace cnl {
namespace {

using testing::pick;
using testing::random_integers;
using testing::random_tensor;

void expect_tensor_eq(const Tensor& a, const Tensor& b) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]) << "at " << i;
}

// ---- Tensor -------------------------------------------------------------------

TEST(Tensor, ShapeAndStorageAgree) {
    Tensor t({2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.cols(), 3u);
    EXPECT_EQ(t.at(1, 2), 1.5);
    EXPECT_THROW(Tensor({2, 0}), ShapeError);
    EXPECT_THROW(Tensor(Shape{}), ShapeError);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, ReshapeCopies) {
    Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    Tensor b = a.reshaped({3, 2});
    b[0] = 9;
    EXPECT_EQ(a[0], 1);
    EXPECT_EQ(b.at(2, 1), 6);
    EXPECT_THROW(a.reshaped({4}), ShapeError);
}

TEST(Tensor, FiniteCheck) {
    Tensor t({2}, 1.0);
    EXPECT_TRUE(t.all_finite());
    t[1] = std::nan("");
    EXPECT_FALSE(t.all_finite());
}

// ---- forward examples -----------------------------------------------------------

TEST(Ops, MatmulIdentity) {
    Tape tape;
    Var a = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    Var b = tape.constant(Tensor::matrix({{2, 3}, {4, 5}}));
    expect_tensor_eq(matmul(a, b).value(), Tensor::matrix({{2, 3}, {4, 5}}));
}

TEST(Ops, MatmulHandExample) {
    Tape tape;
    Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    Var b = tape.constant(Tensor::matrix({{1, 0, 1}, {0, 1, 1}}));
    expect_tensor_eq(matmul(a, b).value(), Tensor::matrix({{1, 2, 3}, {3, 4, 7}}));
}

TEST(Ops, MatmulZero) {
    Tape tape;
    std::mt19937_64 rng(1);
    Var a = tape.constant(Tensor({3, 4}));
    Var b = tape.constant(random_tensor({4, 5}, rng));
    expect_tensor_eq(matmul(a, b).value(), Tensor({3, 5}));
}

TEST(Ops, MatmulRejectsInnerMismatch) {
    Tape tape;
    Var a = tape.constant(Tensor({2, 3}));
    Var b = tape.constant(Tensor({2, 3}));
    EXPECT_THROW(matmul(a, b), ShapeError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
    }
}

TEST(Ops, MatmulMatchesTripleLoopOnIntegers) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = pick(rng, 1, 9), k = pick(rng, 1, 9), n = pick(rng, 1, 9);
        const Tensor a = random_integers({m, k}, rng);
        const Tensor b = random_integers({k, n}, rng);
        Tensor expect({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t t = 0; t < k; ++t) expect.at(i, j) += a.at(i, t) * b.at(t, j);
        Tape tape;
        expect_tensor_eq(matmul(tape.constant(a), tape.constant(b)).value(), expect);
    }
}

TEST(Ops, Elementwise) {
    Tape tape;
    expect_tensor_eq(add(tape.constant(Tensor::vector({1, 2})), tape.constant(Tensor::vector({0, 0}))).value(),
                     Tensor::vector({1, 2}));
    expect_tensor_eq(scale(tape.constant(Tensor::vector({1, -2})), 0.5).value(), Tensor::vector({0.5, -1}));
    expect_tensor_eq(relu(tape.constant(Tensor::vector({-1, 0, 3}))).value(), Tensor::vector({0, 0, 3}));
    EXPECT_THROW(add(tape.constant(Tensor({2})), tape.constant(Tensor({3}))), ShapeError);
}

TEST(Ops, RowSoftmaxRowsSumToOne) {
    std::mt19937_64 rng(3);
    Tape tape;
    const Tensor s = row_softmax(tape.constant(random_tensor({4, 6}, rng, 10.0))).value();
    for (std::size_t i = 0; i < 4; ++i) {
        double total = 0;
        for (std::size_t j = 0; j < 6; ++j) total += s.at(i, j);
        EXPECT_NEAR(total, 1.0, 1e-15);
    }
}

TEST(Ops, SoftmaxCrossEntropyOfUniformLogits) {
    Tape tape;
    const int labels[] = {0, 3};
    Var loss = softmax_cross_entropy(tape.constant(Tensor({2, 4})), labels);
    EXPECT_NEAR(loss.value()[0], std::log(4.0), 1e-15);
}

TEST(Ops, Im2colPatchLayout) {
    // 1×3×3×1 input, 3×3 kernel, padding 1: the centre patch is the whole image.
    Tape tape;
    Tensor x({1, 3, 3, 1});
    for (std::size_t i = 0; i < 9; ++i) x[i] = static_cast<double>(i + 1);
    const Tensor cols = im2col(tape.constant(x), 3, 1, 1).value();
    ASSERT_EQ(cols.shape(), (Shape{9, 9}));
    for (std::size_t j = 0; j < 9; ++j) EXPECT_EQ(cols.at(4, j), static_cast<double>(j + 1));
    EXPECT_EQ(cols.at(0, 0), 0.0);  // top-left patch starts in the padding
    EXPECT_EQ(cols.at(0, 4), 1.0);
}

TEST(Ops, GroupMeanRows) {
    Tape tape;
    const Tensor y = group_mean_rows(tape.constant(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}, {7, 8}})), 2).value();
    expect_tensor_eq(y, Tensor::matrix({{2, 3}, {6, 7}}));
}

// ---- backward examples ----------------------------------------------------------

TEST(Backward, SumOfSquares) {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1, 2, 3}));
    tape.backward(sum(mul(x, x)));
    expect_tensor_eq(tape.grad(x), Tensor::vector({2, 4, 6}));
}

TEST(Backward, MatmulWeightGradientIsColumnSums) {
    std::mt19937_64 rng(5);
    const Tensor xv = random_integers({4, 3}, rng);
    Tape tape;
    Var x = tape.constant(xv);
    Var w = tape.leaf(random_tensor({3, 2}, rng));
    tape.backward(sum(matmul(x, w)));
    const Tensor g = tape.grad(w);
    for (std::size_t t = 0; t < 3; ++t) {
        double col = 0;
        for (std::size_t i = 0; i < 4; ++i) col += xv.at(i, t);
        for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(g.at(t, j), col);
    }
}

TEST(Backward, FanOutAccumulates) {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1.5}));
    tape.backward(sum(add(x, x)));
    EXPECT_EQ(tape.grad(x)[0], 2.0);
}

TEST(Backward, DiamondGraph) {
    // y = relu(x)·2 + x·x, a fan-out at x that merges again at the add.
    Tape tape;
    Var x = tape.leaf(Tensor::vector({-1, 0.5, 2}));
    Var y = add(scale(relu(x), 2.0), mul(x, x));
    tape.backward(sum(y));
    expect_tensor_eq(tape.grad(x), Tensor::vector({-2, 3, 6}));
}

TEST(Backward, VisitsEveryRecordedOpOnce) {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1, 2}));
    Var a = scale(x, 3.0);
    Var b = mul(a, x);
    Var c = add(a, b);
    tape.backward(sum(c));
    EXPECT_EQ(tape.backward_visits(), 4u);  // scale, mul, add, sum
}

TEST(Backward, RejectsNonScalar) {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1, 2}));
    EXPECT_THROW(tape.backward(scale(x, 2.0)), ShapeError);
}

TEST(Backward, ReluSubgradientAtZero) {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({0.0}));
    tape.backward(sum(relu(x)));
    EXPECT_EQ(tape.grad(x)[0], 0.0);
}

TEST(Backward, ParameterGradientsAccumulateAcrossTapes) {
    Parameter p(Tensor::vector({1, 2}));
    for (int i = 0; i < 2; ++i) {
        Tape tape;
        Var v = tape.param(p);
        tape.backward(sum(scale(v, 3.0)));
    }
    expect_tensor_eq(p.grad, Tensor::vector({6, 6}));
    p.zero_grad();
    expect_tensor_eq(p.grad, Tensor::vector({0, 0}));
}

// ---- finite differences ---------------------------------------------------------

TEST(FiniteDiff, SumOfSquares) {
    const Tensor g = finite_diff_grad([](const Tensor& x) { return x[0] * x[0]; }, Tensor::vector({3}));
    EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(FiniteDiff, ConstantFunction) {
    const Tensor g = finite_diff_grad([](const Tensor&) { return 4.0; }, Tensor::vector({1, 2, 3}));
    expect_tensor_eq(g, Tensor({3}));
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
    EXPECT_THROW(finite_diff_grad([](const Tensor&) { return 0.0; }, Tensor({1}), 0.0), std::invalid_argument);
}

TEST(FiniteDiff, RelativeErrorMetric) {
    EXPECT_EQ(max_relative_error(Tensor::vector({1, 2}), Tensor::vector({1, 2})), 0.0);
    EXPECT_NEAR(max_relative_error(Tensor::vector({1.0}), Tensor::vector({1.1})), 0.1 / 1.1, 1e-15);
    // Both near zero: the floor keeps the ratio meaningful.
    EXPECT_NEAR(max_relative_error(Tensor::vector({1e-12}), Tensor::vector({0.0})), 1e-7, 1e-15);
}

// ---- randomized gradient property -------------------------------------------------

// Builds an op from input variables; `inputs` are the tensors the op reads.
struct OpCase {
    std::vector<Tensor> inputs;
    std::function<Var(Tape&, const std::vector<Var>&)> apply;
};

using CaseMaker = std::function<OpCase(std::mt19937_64&)>;

double max_gradient_error(const OpCase& c, std::mt19937_64& rng) {
    // Probe with a fixed random weighting so every output element matters.
    Tensor probe;
    auto loss = [&](Tape& tape, const std::vector<Var>& vars) {
        Var y = c.apply(tape, vars);
        if (probe.empty()) probe = random_tensor(y.shape(), rng);
        return sum(mul(y, tape.constant(probe)));
    };
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : c.inputs) vars.push_back(tape.leaf(t));
    tape.backward(loss(tape, vars));

    double worst = 0;
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
        auto f = [&](const Tensor& xi) {
            Tape t2;
            std::vector<Var> v2;
            for (std::size_t j = 0; j < c.inputs.size(); ++j) v2.push_back(t2.constant(j == i ? xi : c.inputs[j]));
            return loss(t2, v2).value()[0];
        };
        worst = std::max(worst, max_relative_error(tape.grad(vars[i]), finite_diff_grad(f, c.inputs[i])));
    }
    return worst;
}

Tensor away_from_zero(Tensor t) {
    // Keeps relu's kink out of reach of the finite-difference step.
    for (double& v : t.data()) v += v >= 0 ? 0.1 : -0.1;
    return t;
}

const std::vector<std::pair<std::string, CaseMaker>>& op_cases() {
    static const std::vector<std::pair<std::string, CaseMaker>> cases = {
        {"matmul",
         [](std::mt19937_64& r) {
             const std::size_t m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
             return OpCase{{random_tensor({m, k}, r), random_tensor({k, n}, r)},
                           [](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); }};
         }},
        {"matmul_nt",
         [](std::mt19937_64& r) {
             const std::size_t m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
             return OpCase{{random_tensor({m, k}, r), random_tensor({n, k}, r)},
                           [](Tape&, const std::vector<Var>& v) { return matmul_nt(v[0], v[1]); }};
         }},
        {"add_sub_mul",
         [](std::mt19937_64& r) {
             const Shape s{pick(r, 1, 4), pick(r, 1, 4)};
             return OpCase{{random_tensor(s, r), random_tensor(s, r)}, [](Tape&, const std::vector<Var>& v) {
                               return mul(add(v[0], v[1]), sub(v[0], v[1]));
                           }};
         }},
        {"scale",
         [](std::mt19937_64& r) {
             return OpCase{{random_tensor({pick(r, 1, 8)}, r)},
                           [](Tape&, const std::vector<Var>& v) { return scale(v[0], -1.7); }};
         }},
        {"relu",
         [](std::mt19937_64& r) {
             return OpCase{{away_from_zero(random_tensor({pick(r, 1, 4), pick(r, 1, 4)}, r))},
                           [](Tape&, const std::vector<Var>& v) { return relu(v[0]); }};
         }},
        {"add_bias",
         [](std::mt19937_64& r) {
             const std::size_t n = pick(r, 1, 5), c = pick(r, 1, 5);
             return OpCase{{random_tensor({n, c}, r), random_tensor({c}, r)},
                           [](Tape&, const std::vector<Var>& v) { return add_bias(v[0], v[1]); }};
         }},
        {"channel_affine",
         [](std::mt19937_64& r) {
             const std::size_t n = pick(r, 1, 5), c = pick(r, 1, 5);
             return OpCase{{random_tensor({n, c}, r), random_tensor({c}, r), random_tensor({c}, r)},
                           [](Tape&, const std::vector<Var>& v) { return channel_affine(v[0], v[1], v[2]); }};
         }},
        {"standardize_columns",
         [](std::mt19937_64& r) {
             const std::size_t n = pick(r, 2, 6), c = pick(r, 1, 4);
             return OpCase{{random_tensor({n, c}, r)},
                           [](Tape&, const std::vector<Var>& v) { return standardize_columns(v[0], 1e-5); }};
         }},
        {"row_softmax",
         [](std::mt19937_64& r) {
             return OpCase{{random_tensor({pick(r, 1, 4), pick(r, 1, 5)}, r)},
                           [](Tape&, const std::vector<Var>& v) { return row_softmax(v[0]); }};
         }},
        {"reshape_slice_concat",
         [](std::mt19937_64& r) {
             const std::size_t n = pick(r, 2, 6), c = pick(r, 1, 4);
             const std::size_t cut = pick(r, 1, n - 1);
             return OpCase{{random_tensor({n, c}, r), random_tensor({pick(r, 1, 3), c}, r)},
                           [cut, n, c](Tape&, const std::vector<Var>& v) {
                               const Var parts[] = {slice_rows(v[0], cut, n), v[1], slice_rows(v[0], 0, cut)};
                               Var joined = concat_rows(parts);
                               return reshape(joined, {joined.value().size() / c, c});
                           }};
         }},
        {"im2col",
         [](std::mt19937_64& r) {
             const std::size_t b = pick(r, 1, 2), h = pick(r, 2, 4), w = pick(r, 2, 4), c = pick(r, 1, 2);
             const std::size_t s = pick(r, 1, 2), p = pick(r, 0, 1);
             const std::size_t k = pick(r, 1, std::min<std::size_t>(3, std::min(h, w) + 2 * p));
             return OpCase{{random_tensor({b, h, w, c}, r)},
                           [k, s, p](Tape&, const std::vector<Var>& v) { return im2col(v[0], k, s, p); }};
         }},
        {"group_mean_rows",
         [](std::mt19937_64& r) {
             const std::size_t g = pick(r, 1, 3), per = pick(r, 1, 4), c = pick(r, 1, 4);
             return OpCase{{random_tensor({g * per, c}, r)},
                           [g](Tape&, const std::vector<Var>& v) { return group_mean_rows(v[0], g); }};
         }},
        {"softmax_cross_entropy",
         [](std::mt19937_64& r) {
             const std::size_t n = pick(r, 1, 4), k = pick(r, 2, 5);
             std::vector<int> labels(n);
             for (auto& l : labels) l = static_cast<int>(pick(r, 0, k - 1));
             return OpCase{{random_tensor({n, k}, r)}, [labels](Tape&, const std::vector<Var>& v) {
                               return softmax_cross_entropy(v[0], labels);
                           }};
         }},
    };
    return cases;
}

class GradientProperty : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientProperty, AnalyticMatchesFiniteDifferencesOver100Seeds) {
    const auto& [name, make] = op_cases()[GetParam()];
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed * 7919 + GetParam());
        const OpCase c = make(rng);
        for (const auto& t : c.inputs) ASSERT_LE(t.size(), 64u);
        const double err = max_gradient_error(c, rng);
        ASSERT_LT(err, 1e-4) << name << " seed " << seed;
        worst = std::max(worst, err);
    }
    RecordProperty("max_rel_error", std::to_string(worst));
}

INSTANTIATE_TEST_SUITE_P(Ops, GradientProperty, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return op_cases()[info.param].first; });

}  // namespace
}  // namespace cnl
