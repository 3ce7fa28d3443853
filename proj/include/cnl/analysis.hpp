// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Static cost accounting over an ArchSpec: parameters, FLOPs, attention-map entries
// and receptive fields.
//
// Counted parameters: conv weights (+bias), normalization γ/β (2·C, running
// statistics excluded), the classifier, and every insertion's θ/φ/g/z plus its
// output-norm γ/β. Counted FLOPs: convolutions, the classifier, and the attention
// matmuls (1×1 projections, QKᵀ, A·G, z). Pooling, normalization, activations and
// softmax are free.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnl/backbone.hpp"

namespace cnl {

/// How many FLOPs one multiply-accumulate is worth.
enum class FlopConvention { mac1 = 1, mac2 = 2 };

std::string_view to_string(FlopConvention convention);
/// Accepts "mac1"/"mac=1"/"1" and "mac2"/"mac=2"/"2".
FlopConvention parse_convention(std::string_view text);

std::uint64_t matmul_flops(std::uint64_t m, std::uint64_t k, std::uint64_t n, FlopConvention convention);

/// Resolved embedding width of an insertion (applies the C/2 and Cq/8 defaults).
std::size_t insertion_embed(const ArchSpec& spec, const InsertionSpec& insertion);

std::uint64_t count_params(const ArchSpec& spec);
std::uint64_t backbone_params(const ArchSpec& spec);
std::uint64_t insertion_params(const ArchSpec& spec, const InsertionSpec& insertion);

std::uint64_t count_flops(const ArchSpec& spec, std::size_t input_size, FlopConvention convention);
std::uint64_t backbone_flops(const ArchSpec& spec, std::size_t input_size, FlopConvention convention);
std::uint64_t insertion_flops(const ArchSpec& spec, const InsertionSpec& insertion, std::size_t input_size,
                              FlopConvention convention);

/// (H·W)² entries for self-attention over an H×W map.
std::uint64_t nl_attention_entries(std::size_t height, std::size_t width);
/// Nq · Σ Nr_i.
std::uint64_t cnl_attention_entries(std::size_t query_positions, const std::vector<std::size_t>& response_positions);
std::uint64_t attention_memory(const InsertionSpec& insertion, const ArchSpec& spec, std::size_t input_size);
std::uint64_t total_attention_memory(const ArchSpec& spec, std::size_t input_size);

struct ReceptiveField {
    std::string layer;
    std::size_t rf_size = 1;  // pixels
    std::size_t jump = 1;     // pixels between adjacent output positions
    double start = 0.5;       // input coordinate of output position 0's center
};

/// Standard recurrence along the main path (residual shortcuts ignored). `layer` is a
/// layer name, a block name, a block reference such as "res4[2]", a stage name (its
/// last block), or "input".
ReceptiveField receptive_field(const ArchSpec& spec, std::string_view layer);

struct InsertionCost {
    std::string label;  // e.g. "nl@res4[2]" or "cnl@res5[3]<-res3[2]+res3[4]+…"
    InsertionKind kind = InsertionKind::nl;
    std::size_t embed = 0;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
    std::uint64_t attention_entries = 0;
    /// Entries NL blocks at the same layers would need (the query layer for NL,
    /// every tap for CNL).
    std::uint64_t nl_equivalent_entries = 0;
};

struct CostReport {
    std::string spec_name;
    std::size_t input_size = 0;
    std::size_t num_classes = 0;
    FlopConvention convention = FlopConvention::mac1;
    std::uint64_t backbone_params = 0;
    std::uint64_t backbone_flops = 0;
    std::vector<InsertionCost> insertions;
    std::uint64_t param_count = 0;
    std::uint64_t flop_count = 0;
    std::uint64_t attention_entries = 0;
    std::uint64_t nl_equivalent_entries = 0;

    /// 1 − attention_entries / nl_equivalent_entries; nullopt without insertions.
    std::optional<double> memory_reduction() const;
    std::string to_csv() const;
    std::string to_table() const;
};

CostReport cost_report(const ArchSpec& spec, std::size_t input_size, FlopConvention convention);

/// Published reference costs (parameters in units of 1e7) for the 200-class ResNets.
struct PublishedCosts {
    std::string_view spec;
    double baseline = 0;
    double nl = 0;
    double cnl = 0;
};
std::optional<PublishedCosts> published_costs(std::string_view spec_name);
/// Human-readable comparison lines against the published figures, including known
/// inconsistencies among them. Empty for specs without published numbers.
std::vector<std::string> reference_notes(const ArchSpec& spec, std::size_t input_size);

}  // namespace cnl
