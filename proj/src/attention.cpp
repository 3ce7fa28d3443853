// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace cnl {

std::string_view to_string(Affinity mode) { return mode == Affinity::softmax ? "softmax" : "dot-mean"; }

Affinity parse_affinity(std::string_view text) {
    if (text == "dot-mean" || text == "dot_mean" || text == "dot") return Affinity::dot_mean;
    if (text == "softmax") return Affinity::softmax;
    throw std::invalid_argument("unknown attention normalization '" + std::string(text) +
                                "' (expected dot-mean or softmax)");
}

FeatureMap as_feature_map(Var values, std::size_t height, std::size_t width, std::size_t batch) {
    const Tensor& v = values.value();
    if (height == 0 || width == 0 || batch == 0) throw ShapeError("feature map extents must be positive");
    if (v.rank() != 2 || v.rows() != batch * height * width) {
        throw ShapeError("feature map values " + to_string(v.shape()) + " do not hold " + std::to_string(batch) +
                         "x" + std::to_string(height) + "x" + std::to_string(width) + " positions");
    }
    return FeatureMap{batch, height, width, v.cols(), values};
}

FeatureMap make_feature_map(Tape& tape, Tensor values, std::size_t height, std::size_t width, bool requires_grad,
                            std::size_t batch) {
    return as_feature_map(tape.leaf(std::move(values), requires_grad), height, width, batch);
}

OutNorm::OutNorm(std::size_t channels)
    : gamma(Tensor({channels})), beta(Tensor({channels})), running_mean(channels, 0.0), running_var(channels, 1.0) {}

void OutNorm::update_running(const std::vector<double>& batch_mean, const std::vector<double>& batch_var) {
    if (batch_mean.size() != channels() || batch_var.size() != channels()) {
        throw ShapeError("out-norm statistics have the wrong channel count");
    }
    for (std::size_t c = 0; c < channels(); ++c) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * batch_mean[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * batch_var[c];
    }
}

std::size_t default_nl_embed(std::size_t channels) { return std::max<std::size_t>(1, channels / 2); }
std::size_t default_cnl_embed(std::size_t query_channels) { return std::max<std::size_t>(1, query_channels / 8); }

namespace {

Parameter random_projection(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    Tensor w({in, out});
    for (double& v : w.data()) v = dist(rng);
    return Parameter(std::move(w));
}

}  // namespace

NLParams NLParams::create(std::size_t channels, std::size_t embed, std::mt19937_64& rng) {
    return create_bi(channels, channels, embed ? embed : default_nl_embed(channels), rng);
}

NLParams NLParams::create_bi(std::size_t query_channels, std::size_t response_channels, std::size_t embed,
                             std::mt19937_64& rng) {
    if (query_channels == 0 || response_channels == 0) throw ShapeError("NL block needs positive channel counts");
    NLParams p;
    p.query_channels = query_channels;
    p.response_channels = response_channels;
    p.embed = embed ? embed : default_nl_embed(query_channels);
    p.theta = random_projection(query_channels, p.embed, rng);
    p.phi = random_projection(response_channels, p.embed, rng);
    p.g = random_projection(response_channels, p.embed, rng);
    p.z = random_projection(p.embed, query_channels, rng);
    p.out_norm = OutNorm(query_channels);
    return p;
}

std::size_t NLParams::parameter_count() const {
    return theta.value.size() + phi.value.size() + g.value.size() + z.value.size() + 2 * query_channels;
}

std::vector<std::pair<std::string, Parameter*>> NLParams::named_parameters() {
    return {{"theta", &theta}, {"phi", &phi}, {"g", &g}, {"z", &z}, {"gamma", &out_norm.gamma},
            {"beta", &out_norm.beta}};
}

CNLParams CNLParams::create(std::size_t query_channels, std::span<const std::size_t> response_channels,
                            std::size_t embed, std::mt19937_64& rng) {
    if (query_channels == 0) throw ShapeError("CNL block needs a positive query channel count");
    if (response_channels.empty()) throw std::invalid_argument("CNL block needs at least one response layer");
    CNLParams p;
    p.query_channels = query_channels;
    p.embed = embed ? embed : default_cnl_embed(query_channels);
    p.theta = random_projection(query_channels, p.embed, rng);
    for (std::size_t c : response_channels) {
        if (c == 0) throw ShapeError("CNL response channel counts must be positive");
        CNLBranch branch;
        branch.channels = c;
        branch.phi = random_projection(c, p.embed, rng);
        branch.g = random_projection(c, p.embed, rng);
        p.branches.push_back(std::move(branch));
    }
    p.z = random_projection(p.embed, query_channels, rng);
    p.out_norm = OutNorm(query_channels);
    return p;
}

CNLParams CNLParams::from_nl(const NLParams& nl) {
    CNLParams p;
    p.query_channels = nl.query_channels;
    p.embed = nl.embed;
    p.theta = nl.theta;
    p.branches.push_back(CNLBranch{nl.response_channels, nl.phi, nl.g});
    p.z = nl.z;
    p.out_norm = nl.out_norm;
    return p;
}

std::size_t CNLParams::parameter_count() const {
    std::size_t total = theta.value.size() + z.value.size() + 2 * query_channels;
    for (const auto& b : branches) total += b.phi.value.size() + b.g.value.size();
    return total;
}

std::vector<std::pair<std::string, Parameter*>> CNLParams::named_parameters() {
    std::vector<std::pair<std::string, Parameter*>> out{{"theta", &theta}};
    for (std::size_t i = 0; i < branches.size(); ++i) {
        out.emplace_back("phi" + std::to_string(i + 1), &branches[i].phi);
        out.emplace_back("g" + std::to_string(i + 1), &branches[i].g);
    }
    out.emplace_back("z", &z);
    out.emplace_back("gamma", &out_norm.gamma);
    out.emplace_back("beta", &out_norm.beta);
    return out;
}

NLBinding bind(Tape& tape, NLParams& p) {
    return {tape.param(p.theta), tape.param(p.phi),         tape.param(p.g),
            tape.param(p.z),     tape.param(p.out_norm.gamma), tape.param(p.out_norm.beta),
            &p.out_norm};
}

NLBinding bind_frozen(Tape& tape, const NLParams& p) {
    return {tape.constant(p.theta.value), tape.constant(p.phi.value),
            tape.constant(p.g.value),     tape.constant(p.z.value),
            tape.constant(p.out_norm.gamma.value), tape.constant(p.out_norm.beta.value),
            &p.out_norm};
}

CNLBinding bind(Tape& tape, CNLParams& p) {
    CNLBinding b;
    b.theta = tape.param(p.theta);
    for (auto& branch : p.branches) b.branches.emplace_back(tape.param(branch.phi), tape.param(branch.g));
    b.z = tape.param(p.z);
    b.gamma = tape.param(p.out_norm.gamma);
    b.beta = tape.param(p.out_norm.beta);
    b.norm = &p.out_norm;
    return b;
}

CNLBinding bind_frozen(Tape& tape, const CNLParams& p) {
    CNLBinding b;
    b.theta = tape.constant(p.theta.value);
    for (const auto& branch : p.branches) {
        b.branches.emplace_back(tape.constant(branch.phi.value), tape.constant(branch.g.value));
    }
    b.z = tape.constant(p.z.value);
    b.gamma = tape.constant(p.out_norm.gamma.value);
    b.beta = tape.constant(p.out_norm.beta.value);
    b.norm = &p.out_norm;
    return b;
}

FeatureMap project_1x1(const FeatureMap& x, Var weight) {
    const Tensor& w = weight.value();
    if (w.rank() != 2 || w.rows() != x.channels) {
        throw ShapeError("1x1 projection " + to_string(w.shape()) + " cannot read " + std::to_string(x.channels) +
                         " channels");
    }
    FeatureMap out = x;
    out.values = matmul(x.values, weight);
    out.channels = w.cols();
    return out;
}

Var pairwise_dot(Var q, Var k, Affinity mode) {
    if (q.value().cols() != k.value().cols()) {
        throw ShapeError("pairwise_dot: embedding widths differ, " + to_string(q.shape()) + " vs " +
                         to_string(k.shape()));
    }
    Var raw = matmul_nt(q, k);
    if (mode == Affinity::softmax) return row_softmax(raw);
    return scale(raw, 1.0 / static_cast<double>(k.value().rows()));
}

AttentionMap pairwise_dot(const Tensor& q, const Tensor& k, Affinity mode) {
    Tape tape;
    Var a = pairwise_dot(tape.constant(q), tape.constant(k), mode);
    return AttentionMap{a.value(), "query", "response", 0};
}

Var batch_norm(Var y, Var gamma, Var beta, const OutNorm& norm, bool training, std::vector<double>& batch_mean,
               std::vector<double>& batch_var) {
    Tape& tape = y.tape();
    const std::size_t c = y.value().cols();
    if (gamma.value().size() != c || beta.value().size() != c || norm.channels() != c) {
        throw ShapeError("norm has " + std::to_string(norm.channels()) + " channels, input has " +
                         std::to_string(c));
    }
    if (training) {
        column_mean_var(y.value(), batch_mean, batch_var);
        return channel_affine(standardize_columns(y, norm.eps), gamma, beta);
    }
    // Inference: scale = γ / sqrt(running_var + eps), shift = β - running_mean · scale.
    Tensor inv_std({c}), mean({c});
    for (std::size_t j = 0; j < c; ++j) {
        inv_std[j] = 1.0 / std::sqrt(norm.running_var[j] + norm.eps);
        mean[j] = norm.running_mean[j];
    }
    Var s = mul(gamma, tape.constant(std::move(inv_std)));
    Var h = sub(beta, mul(s, tape.constant(std::move(mean))));
    return channel_affine(y, s, h);
}

namespace {

struct Branch {
    const FeatureMap* response;
    Var phi;
    Var g;
};

// Shared body of all three blocks: one query projection against any number of
// (φ_i, g_i) response branches, summed before the single z projection.
AttentionResult attend(const FeatureMap& xq, Var theta, std::span<const Branch> branches, Var z, Var gamma,
                       Var beta, const OutNorm* norm, const AttentionOptions& options) {
    if (branches.empty()) throw std::invalid_argument("attention block needs at least one response layer");
    if (!norm) throw std::invalid_argument("attention block binding has no out-norm");
    const std::size_t batch = xq.batch;
    const std::size_t nq = xq.positions();
    const std::size_t embed = theta.value().cols();
    if (z.value().rank() != 2 || z.value().rows() != embed || z.value().cols() != xq.channels) {
        throw ShapeError("z projection " + to_string(z.shape()) + " must map " + std::to_string(embed) + " to " +
                         std::to_string(xq.channels) + " channels");
    }

    const FeatureMap q_all = project_1x1(xq, theta);
    std::vector<FeatureMap> keys, vals;
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const FeatureMap& r = *branches[i].response;
        if (r.batch != batch) throw ShapeError("response layer batch size differs from the query's");
        keys.push_back(project_1x1(r, branches[i].phi));
        vals.push_back(project_1x1(r, branches[i].g));
        if (keys.back().channels != embed || vals.back().channels != embed) {
            throw ShapeError("branch " + std::to_string(i + 1) + " embeds into " +
                             std::to_string(keys.back().channels) + " channels, query into " + std::to_string(embed));
        }
    }

    AttentionResult result;
    std::vector<Var> per_image;
    for (std::size_t b = 0; b < batch; ++b) {
        Var q = batch == 1 ? q_all.values : slice_rows(q_all.values, b * nq, (b + 1) * nq);
        Var aggregate;
        for (std::size_t i = 0; i < branches.size(); ++i) {
            const std::size_t nr = branches[i].response->positions();
            Var k = batch == 1 ? keys[i].values : slice_rows(keys[i].values, b * nr, (b + 1) * nr);
            Var v = batch == 1 ? vals[i].values : slice_rows(vals[i].values, b * nr, (b + 1) * nr);
            Var a = pairwise_dot(q, k, options.affinity);
            Var weighted = matmul(a, v);
            aggregate = i == 0 ? weighted : add(aggregate, weighted);
            if (options.capture) {
                const std::string rid = i < options.response_ids.size() ? options.response_ids[i]
                                                                         : "r" + std::to_string(i + 1);
                result.maps.push_back(AttentionMap{a.value(), options.query_id, rid, b});
            }
        }
        per_image.push_back(aggregate);
    }
    Var aggregated = batch == 1 ? per_image.front() : concat_rows(per_image);
    Var y = matmul(aggregated, z);
    Var normed = batch_norm(y, gamma, beta, *norm, options.training, result.batch_mean, result.batch_var);
    result.output = xq;
    result.output.values = add(xq.values, normed);
    return result;
}

void require_same_tape(const FeatureMap& a, const Var& b) {
    if (&a.values.tape() != &b.tape()) throw std::logic_error("feature map and parameters live on different tapes");
}

}  // namespace

AttentionResult nl_bi_forward(const FeatureMap& xq, const FeatureMap& xr, const NLBinding& p,
                              const AttentionOptions& options) {
    require_same_tape(xq, p.theta);
    const Branch branch{&xr, p.phi, p.g};
    return attend(xq, p.theta, std::span<const Branch>(&branch, 1), p.z, p.gamma, p.beta, p.norm, options);
}

AttentionResult nl_forward(const FeatureMap& x, const NLBinding& p, const AttentionOptions& options) {
    if (p.theta.value().rows() != p.phi.value().rows()) {
        throw ShapeError("nl_forward needs matching query/response widths; use nl_bi_forward");
    }
    return nl_bi_forward(x, x, p, options);
}

AttentionResult cnl_forward(const FeatureMap& xq, std::span<const FeatureMap> responses, const CNLBinding& p,
                            const AttentionOptions& options) {
    require_same_tape(xq, p.theta);
    if (responses.size() != p.branches.size()) {
        throw std::invalid_argument("CNL block has " + std::to_string(p.branches.size()) + " branches but " +
                                    std::to_string(responses.size()) + " response layers were given");
    }
    std::vector<Branch> branches;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        branches.push_back(Branch{&responses[i], p.branches[i].first, p.branches[i].second});
    }
    return attend(xq, p.theta, branches, p.z, p.gamma, p.beta, p.norm, options);
}

AttentionResult nl_forward(const FeatureMap& x, const NLParams& p, const AttentionOptions& options) {
    return nl_forward(x, bind_frozen(x.values.tape(), p), options);
}

AttentionResult nl_bi_forward(const FeatureMap& xq, const FeatureMap& xr, const NLParams& p,
                              const AttentionOptions& options) {
    return nl_bi_forward(xq, xr, bind_frozen(xq.values.tape(), p), options);
}

AttentionResult cnl_forward(const FeatureMap& xq, std::span<const FeatureMap> responses, const CNLParams& p,
                            const AttentionOptions& options) {
    return cnl_forward(xq, responses, bind_frozen(xq.values.tape(), p), options);
}

}  // namespace cnl
