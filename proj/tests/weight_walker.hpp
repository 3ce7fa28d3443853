// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force parameter oracle: lists every weight tensor an ArchSpec implies, by shape,
// and multiplies the extents out. Shares no code with the analysis module.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cnl/backbone.hpp"

namespace cnl::testing {

struct WeightTensor {
    std::string name;
    std::vector<std::uint64_t> shape;
};

inline std::vector<WeightTensor> walk_weights(const ArchSpec& spec) {
    std::vector<WeightTensor> out;
    std::map<std::string, std::uint64_t> block_channels;  // "stage[b]" -> output channels
    auto walk_layer = [&](const LayerSpec& l, std::uint64_t& channels) {
        const std::uint64_t in = l.in_channels, o = l.out_channels, k = l.kernel;
        switch (l.kind) {
            case LayerKind::conv:
                out.push_back({l.name + ".w", {k, k, in, o}});
                if (l.bias) out.push_back({l.name + ".b", {o}});
                channels = o;
                break;
            case LayerKind::linear:
                out.push_back({l.name + ".w", {in, o}});
                if (l.bias) out.push_back({l.name + ".b", {o}});
                channels = o;
                break;
            case LayerKind::norm:
                out.push_back({l.name + ".gamma", {o}});
                out.push_back({l.name + ".beta", {o}});
                break;
            default:
                break;
        }
    };
    std::uint64_t channels = spec.input_channels;
    for (const auto& stage : spec.stages) {
        for (const auto& l : stage.entry) walk_layer(l, channels);
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            const std::uint64_t in = channels;
            for (const auto& l : stage.blocks[b].body) walk_layer(l, channels);
            std::uint64_t skip = in;
            for (const auto& l : stage.blocks[b].shortcut) walk_layer(l, skip);
            block_channels[stage.name + "[" + std::to_string(b + 1) + "]"] = channels;
        }
    }
    const std::uint64_t k = spec.num_classes;
    out.push_back({"classifier.w", {channels, k}});
    if (spec.classifier_bias) out.push_back({"classifier.b", {k}});

    for (std::size_t i = 0; i < spec.insertions.size(); ++i) {
        const InsertionSpec& ins = spec.insertions[i];
        const std::string p = "ins" + std::to_string(i) + ".";
        const std::uint64_t c = block_channels.at(ins.host.stage + "[" + std::to_string(ins.host.block) + "]");
        if (ins.kind == InsertionKind::nl) {
            const std::uint64_t e = ins.embed ? ins.embed : c / 2;
            out.push_back({p + "theta", {c, e}});
            out.push_back({p + "phi", {c, e}});
            out.push_back({p + "g", {c, e}});
            out.push_back({p + "z", {e, c}});
        } else {
            const std::uint64_t e = ins.embed ? ins.embed : c / 8;
            out.push_back({p + "theta", {c, e}});
            for (const auto& r : ins.responses) {
                const std::uint64_t cr = block_channels.at(r.stage + "[" + std::to_string(r.block) + "]");
                out.push_back({p + "phi", {cr, e}});
                out.push_back({p + "g", {cr, e}});
            }
            out.push_back({p + "z", {e, c}});
        }
        out.push_back({p + "gamma", {c}});
        out.push_back({p + "beta", {c}});
    }
    return out;
}

inline std::uint64_t walk_param_count(const ArchSpec& spec) {
    std::uint64_t total = 0;
    for (const auto& w : walk_weights(spec)) {
        std::uint64_t n = 1;
        for (std::uint64_t d : w.shape) n *= d;
        total += n;
    }
    return total;
}

}  // namespace cnl::testing
