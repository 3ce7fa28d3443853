// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cnl/attention.hpp"
#include "cnl/backbone.hpp"

namespace cnl {

struct ConvParams {
    std::string name;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    Parameter weight;  // [k·k·Cin, Cout], rows ordered (ky, kx, c)
    Parameter bias;    // [Cout], empty when the layer has none
};

/// Backbone batch norm: γ starts at 1, β at 0.
struct NormParams {
    std::string name;
    OutNorm norm;
};

struct ForwardOptions {
    /// Batch statistics in every norm (and running-stat updates in forward_train).
    bool training = false;
    bool capture = false;
    Affinity affinity = Affinity::dot_mean;
};

struct ForwardResult {
    Var logits;  // [B, num_classes]
    std::vector<AttentionMap> maps;
};

/// Executable network built from an ArchSpec whose layers are all conv/norm/relu (the toy
/// family). Insertions from spec.insertions are realized as NL/CNL blocks.
class Model {
public:
    Model(ArchSpec spec, std::uint64_t seed);

    const ArchSpec& spec() const { return spec_; }

    /// Parameters enter the tape as constants. Safe to call concurrently.
    ForwardResult forward(Tape& tape, const Tensor& images, const ForwardOptions& options = {}) const;
    /// Parameters enter the tape as trainable leaves; in training mode the running
    /// statistics of every norm are updated from this batch.
    ForwardResult forward_train(Tape& tape, const Tensor& images, const ForwardOptions& options = {});

    std::vector<std::pair<std::string, Parameter*>> named_parameters();
    std::size_t parameter_count() const;
    void zero_grad();

    void save(const std::filesystem::path& path) const;
    static Model load(const std::filesystem::path& path);

    std::vector<ConvParams>& convs() { return convs_; }
    std::vector<NormParams>& norms() { return norms_; }
    std::vector<NLParams>& nl_blocks() { return nl_; }
    std::vector<CNLParams>& cnl_blocks() { return cnl_; }

private:
    template <typename Self>
    static ForwardResult run(Self& self, Tape& tape, const Tensor& images, const ForwardOptions& options);

    ArchSpec spec_;
    std::vector<ConvParams> convs_;  // network order
    std::vector<NormParams> norms_;  // network order
    Parameter fc_weight_;            // [C, K]
    Parameter fc_bias_;              // [K]
    std::vector<NLParams> nl_;       // one per NL insertion, spec order
    std::vector<CNLParams> cnl_;     // one per CNL insertion, spec order
};

/// Validates `spec` and builds its executable model (all insertions realized).
Model apply_insertions(const ArchSpec& spec, std::uint64_t seed);

}  // namespace cnl
