// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Non-local attention blocks over positions×channels feature maps.
//
//   nl_forward(x)              x  + norm(z( f(θx, φx)  · gx ))
//   nl_bi_forward(xq, xr)      xq + norm(z( f(θxq, φxr) · gxr ))
//   cnl_forward(xq, r1..rn)    xq + norm(z( Σ_i f(θxq, φ_i r_i) · g_i r_i ))
//
// θ, φ, g, z are bias-free 1×1 projections (plain matrices here). f is a dot product,
// either divided by the number of response positions (dot_mean) or row-softmaxed.
// `norm` is a per-channel affine normalization whose scale and shift start at zero,
// so a freshly created block returns its query input unchanged.

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cnl/autograd.hpp"

namespace cnl {

enum class Affinity { dot_mean, softmax };

std::string_view to_string(Affinity mode);
Affinity parse_affinity(std::string_view text);

/// Rows are spatial positions (row i ↔ (i / width, i % width)), columns are channels.
/// A batch stacks `batch` images one after another: values is [batch·H·W, C].
struct FeatureMap {
    std::size_t batch = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t channels = 1;
    Var values;

    std::size_t positions() const { return height * width; }
};

FeatureMap make_feature_map(Tape& tape, Tensor values, std::size_t height, std::size_t width,
                            bool requires_grad = false, std::size_t batch = 1);
/// Wraps an existing [batch·H·W, C] variable, validating its extents.
FeatureMap as_feature_map(Var values, std::size_t height, std::size_t width, std::size_t batch = 1);

/// Zero-initialized per-channel scale/shift plus running statistics for inference.
struct OutNorm {
    Parameter gamma;
    Parameter beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    OutNorm() = default;
    explicit OutNorm(std::size_t channels);

    std::size_t channels() const { return running_mean.size(); }
    void update_running(const std::vector<double>& batch_mean, const std::vector<double>& batch_var);
};

/// Per-channel normalization of a [n,C] matrix followed by γ·x̂ + β. Training uses the
/// batch statistics (returned in batch_mean/batch_var), inference the running ones.
Var batch_norm(Var y, Var gamma, Var beta, const OutNorm& norm, bool training, std::vector<double>& batch_mean,
               std::vector<double>& batch_var);

struct NLParams {
    std::size_t query_channels = 0;
    std::size_t response_channels = 0;
    std::size_t embed = 0;
    Parameter theta;  // [Cq, Ce]
    Parameter phi;    // [Cr, Ce]
    Parameter g;      // [Cr, Ce]
    Parameter z;      // [Ce, Cq]
    OutNorm out_norm;

    /// Self-attention block on a C-channel map; embed 0 selects C/2.
    static NLParams create(std::size_t channels, std::size_t embed, std::mt19937_64& rng);
    /// Two-input block: θ reads Cq channels, φ and g read Cr channels.
    static NLParams create_bi(std::size_t query_channels, std::size_t response_channels, std::size_t embed,
                              std::mt19937_64& rng);

    std::size_t parameter_count() const;
    std::vector<std::pair<std::string, Parameter*>> named_parameters();
};

struct CNLBranch {
    std::size_t channels = 0;
    Parameter phi;  // [C_ri, Ce]
    Parameter g;    // [C_ri, Ce]
};

struct CNLParams {
    std::size_t query_channels = 0;
    std::size_t embed = 0;
    Parameter theta;  // [Cq, Ce], shared by all branches
    std::vector<CNLBranch> branches;
    Parameter z;  // [Ce, Cq], applied once to the summed aggregate
    OutNorm out_norm;

    /// embed 0 selects Cq/8 (256 for a 2048-channel query).
    static CNLParams create(std::size_t query_channels, std::span<const std::size_t> response_channels,
                            std::size_t embed, std::mt19937_64& rng);
    /// Single-branch block carrying exactly the weights of `nl`.
    static CNLParams from_nl(const NLParams& nl);

    std::size_t parameter_count() const;
    std::vector<std::pair<std::string, Parameter*>> named_parameters();
};

std::size_t default_nl_embed(std::size_t channels);
std::size_t default_cnl_embed(std::size_t query_channels);

/// Entry (i, j) is the affinity of query position i with response position j.
struct AttentionMap {
    Tensor matrix;  // [Nq, Nr]
    std::string query_id;
    std::string response_id;
    std::size_t image = 0;
};

struct AttentionOptions {
    Affinity affinity = Affinity::dot_mean;
    /// Normalize with batch statistics (training) instead of running statistics.
    bool training = false;
    bool capture = true;
    std::string query_id = "query";
    std::vector<std::string> response_ids;  // defaults to r1..rn
};

struct AttentionResult {
    FeatureMap output;
    std::vector<AttentionMap> maps;  // image-major, then branch order
    std::vector<double> batch_mean;  // out-norm input statistics, training only
    std::vector<double> batch_var;
};

/// Parameters placed on a tape. bind() makes them trainable (gradients flow back into
/// the Parameter objects); bind_frozen() records constants.
struct NLBinding {
    Var theta, phi, g, z, gamma, beta;
    const OutNorm* norm = nullptr;
};

struct CNLBinding {
    Var theta;
    std::vector<std::pair<Var, Var>> branches;  // (phi_i, g_i)
    Var z, gamma, beta;
    const OutNorm* norm = nullptr;
};

NLBinding bind(Tape& tape, NLParams& p);
NLBinding bind_frozen(Tape& tape, const NLParams& p);
CNLBinding bind(Tape& tape, CNLParams& p);
CNLBinding bind_frozen(Tape& tape, const CNLParams& p);

FeatureMap project_1x1(const FeatureMap& x, Var weight);

/// raw = q·kᵀ; dot_mean returns raw / Nr, softmax the row-wise softmax of raw.
Var pairwise_dot(Var q, Var k, Affinity mode);
AttentionMap pairwise_dot(const Tensor& q, const Tensor& k, Affinity mode);

AttentionResult nl_forward(const FeatureMap& x, const NLBinding& p, const AttentionOptions& options = {});
AttentionResult nl_bi_forward(const FeatureMap& xq, const FeatureMap& xr, const NLBinding& p,
                              const AttentionOptions& options = {});
AttentionResult cnl_forward(const FeatureMap& xq, std::span<const FeatureMap> responses, const CNLBinding& p,
                            const AttentionOptions& options = {});

// Inference conveniences: bind the parameters as constants on the query's tape.
AttentionResult nl_forward(const FeatureMap& x, const NLParams& p, const AttentionOptions& options = {});
AttentionResult nl_bi_forward(const FeatureMap& xq, const FeatureMap& xr, const NLParams& p,
                              const AttentionOptions& options = {});
AttentionResult cnl_forward(const FeatureMap& xq, std::span<const FeatureMap> responses, const CNLParams& p,
                            const AttentionOptions& options = {});

}  // namespace cnl
