// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/gradient_suite.hpp"

#include <algorithm>
#include <random>

#include "cnl/gradcheck.hpp"

namespace cnl {

namespace {

enum class Op { nl, nl_bi, cnl };

const char* op_name(Op op) {
    switch (op) {
        case Op::nl: return "nl_forward";
        case Op::nl_bi: return "nl_bi_forward";
        case Op::cnl: return "cnl_forward";
    }
    return "?";
}

constexpr double kMinBatchVariance = 1e-2;

struct Geometry {
    std::size_t h, w, c;
};

// One randomized problem. `groups` holds every differentiable tensor by name; the
// loss is Σ output ∘ probe for a fixed random probe.
struct Case {
    Op op = Op::nl;
    Affinity mode = Affinity::dot_mean;
    bool training = false;
    Geometry query{};
    std::vector<Geometry> responses;
    std::vector<std::pair<std::string, Tensor>> groups;
    Tensor probe;
    OutNorm norm;
};

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = dist(rng);
    return t;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Geometry random_geometry(std::mt19937_64& rng, bool at_least_two_positions) {
    Geometry g{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 2, 4)};
    if (at_least_two_positions && g.h * g.w < 2) g.w = 2;
    return g;
}

Case make_case(Op op, Affinity mode, bool training, std::mt19937_64& rng) {
    Case c;
    c.op = op;
    c.mode = mode;
    c.training = training;
    // Batch statistics over a single position standardize to zero; keep ≥ 2 rows.
    c.query = random_geometry(rng, true);
    const std::size_t embed = pick(rng, 1, 3);
    std::size_t branches = 1;
    if (op == Op::nl) {
        c.responses.push_back(c.query);
    } else {
        branches = op == Op::cnl ? pick(rng, 1, 3) : 1;
        for (std::size_t i = 0; i < branches; ++i) c.responses.push_back(random_geometry(rng, false));
    }
    const Geometry& q = c.query;
    c.groups.emplace_back("xq", random_tensor({q.h * q.w, q.c}, rng));
    if (op != Op::nl) {
        for (std::size_t i = 0; i < branches; ++i) {
            const Geometry& r = c.responses[i];
            c.groups.emplace_back("xr" + std::to_string(i + 1), random_tensor({r.h * r.w, r.c}, rng));
        }
    }
    c.groups.emplace_back("theta", random_tensor({q.c, embed}, rng, 0.7));
    for (std::size_t i = 0; i < branches; ++i) {
        const std::string suffix = op == Op::cnl ? std::to_string(i + 1) : "";
        c.groups.emplace_back("phi" + suffix, random_tensor({c.responses[i].c, embed}, rng, 0.7));
        c.groups.emplace_back("g" + suffix, random_tensor({c.responses[i].c, embed}, rng, 0.7));
    }
    c.groups.emplace_back("z", random_tensor({embed, q.c}, rng, 0.7));
    c.groups.emplace_back("gamma", random_tensor({q.c}, rng));
    c.groups.emplace_back("beta", random_tensor({q.c}, rng));
    c.probe = random_tensor({q.h * q.w, q.c}, rng);
    c.norm = OutNorm(q.c);
    std::uniform_real_distribution<double> var_dist(0.5, 2.0);
    std::normal_distribution<double> mean_dist(0.0, 0.5);
    for (std::size_t j = 0; j < q.c; ++j) {
        c.norm.running_mean[j] = mean_dist(rng);
        c.norm.running_var[j] = var_dist(rng);
    }
    return c;
}

// Loss with group `replace` swapped for `substitute` (when non-null). When `grads` is
// given, fills it with the analytic gradient of every group; `batch_var`, when given,
// receives the per-channel batch variance entering the normalization.
double evaluate(const Case& c, std::size_t replace, const Tensor* substitute, std::vector<Tensor>* grads,
                std::vector<double>* batch_var = nullptr) {
    Tape tape;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < c.groups.size(); ++i) {
        const Tensor& t = (substitute && i == replace) ? *substitute : c.groups[i].second;
        vars.push_back(tape.leaf(t, grads != nullptr));
    }
    std::size_t next = 0;
    const FeatureMap xq = as_feature_map(vars[next++], c.query.h, c.query.w);
    std::vector<FeatureMap> responses;
    if (c.op != Op::nl) {
        for (const Geometry& r : c.responses) responses.push_back(as_feature_map(vars[next++], r.h, r.w));
    }
    AttentionOptions options;
    options.affinity = c.mode;
    options.training = c.training;
    options.capture = false;

    AttentionResult result;
    if (c.op == Op::cnl) {
        CNLBinding b;
        b.theta = vars[next++];
        for (std::size_t i = 0; i < responses.size(); ++i) {
            Var phi = vars[next++];
            Var g = vars[next++];
            b.branches.emplace_back(phi, g);
        }
        b.z = vars[next++];
        b.gamma = vars[next++];
        b.beta = vars[next++];
        b.norm = &c.norm;
        result = cnl_forward(xq, responses, b, options);
    } else {
        NLBinding b;
        b.theta = vars[next++];
        b.phi = vars[next++];
        b.g = vars[next++];
        b.z = vars[next++];
        b.gamma = vars[next++];
        b.beta = vars[next++];
        b.norm = &c.norm;
        result = c.op == Op::nl ? nl_forward(xq, b, options) : nl_bi_forward(xq, responses.front(), b, options);
    }
    if (batch_var) *batch_var = result.batch_var;
    Var loss = sum(mul(result.output.values, tape.constant(c.probe)));
    if (grads) {
        tape.backward(loss);
        grads->clear();
        for (const Var& v : vars) grads->push_back(tape.grad(v));
    }
    return loss.value()[0];
}

/// Batch normalization of a channel whose branch output is nearly constant over positions
/// scales rounding error by up to 1/sqrt(eps), beyond what central differences resolve.
/// Such draws are replaced.
bool well_conditioned(const Case& c) {
    if (!c.training) return true;
    std::vector<double> var;
    evaluate(c, 0, nullptr, nullptr, &var);
    return std::all_of(var.begin(), var.end(), [](double v) { return v >= kMinBatchVariance; });
}

}  // namespace

std::vector<GradientCheck> run_gradient_suite(const GradientSuiteOptions& options) {
    std::vector<GradientCheck> checks;
    std::mt19937_64 rng(options.seed);
    for (std::size_t round = 0; round < options.rounds; ++round) {
        for (Op op : {Op::nl, Op::nl_bi, Op::cnl}) {
            for (Affinity mode : options.modes) {
                for (bool training : {true, false}) {
                    Case c = make_case(op, mode, training, rng);
                    while (!well_conditioned(c)) c = make_case(op, mode, training, rng);
                    std::vector<Tensor> analytic;
                    evaluate(c, 0, nullptr, &analytic);
                    const bool corrupt = options.corrupt_op == op_name(op);
                    for (std::size_t g = 0; g < c.groups.size(); ++g) {
                        auto f = [&](const Tensor& t) { return evaluate(c, g, &t, nullptr); };
                        const Tensor numeric = finite_diff_grad(f, c.groups[g].second, options.eps);
                        Tensor a = analytic[g];
                        if (corrupt) {
                            for (double& v : a.data()) v *= 1.01;
                        }
                        GradientCheck check;
                        check.op = op_name(op);
                        check.mode = std::string(to_string(mode));
                        check.norm = training ? "batch" : "running";
                        check.wrt = c.groups[g].first;
                        check.seed = options.seed;
                        check.elements = a.size();
                        check.rel_error = max_relative_error(a, numeric);
                        check.passed = check.rel_error < options.threshold && a.all_finite();
                        checks.push_back(std::move(check));
                    }
                }
            }
        }
    }
    return checks;
}

}  // namespace cnl
