// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "cnl/attention.hpp"
#include "cnl/io.hpp"

namespace cnl {

std::string_view to_string(FlopConvention convention) {
    return convention == FlopConvention::mac1 ? "mac1" : "mac2";
}

FlopConvention parse_convention(std::string_view text) {
    if (text == "mac1" || text == "mac=1" || text == "1") return FlopConvention::mac1;
    if (text == "mac2" || text == "mac=2" || text == "2") return FlopConvention::mac2;
    throw std::invalid_argument("unknown FLOP convention '" + std::string(text) + "' (expected mac1 or mac2)");
}

std::uint64_t matmul_flops(std::uint64_t m, std::uint64_t k, std::uint64_t n, FlopConvention convention) {
    return m * k * n * static_cast<std::uint64_t>(convention);
}

namespace {

std::uint64_t layer_params(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::conv:
            return static_cast<std::uint64_t>(l.kernel) * l.kernel * l.in_channels * l.out_channels +
                   (l.bias ? l.out_channels : 0);
        case LayerKind::norm:
            return 2 * static_cast<std::uint64_t>(l.in_channels);
        case LayerKind::linear:
            return static_cast<std::uint64_t>(l.in_channels) * l.out_channels + (l.bias ? l.out_channels : 0);
        default:
            return 0;
    }
}

std::uint64_t layers_params(const std::vector<LayerSpec>& layers) {
    std::uint64_t total = 0;
    for (const auto& l : layers) total += layer_params(l);
    return total;
}

// Walks every layer with its input geometry; returns the final geometry.
template <typename Visit>
Geometry walk_layers(const std::vector<LayerSpec>& layers, Geometry g, Visit&& visit) {
    for (const auto& l : layers) {
        const Geometry out = layer_output(l, g);
        visit(l, g, out);
        g = out;
    }
    return g;
}

template <typename Visit>
void walk_all_layers(const ArchSpec& spec, std::size_t input_size, Visit&& visit) {
    Geometry g{input_size, input_size, spec.input_channels};
    for (const auto& stage : spec.stages) {
        g = walk_layers(stage.entry, g, visit);
        for (const auto& block : stage.blocks) {
            const Geometry in = g;
            g = walk_layers(block.body, in, visit);
            walk_layers(block.shortcut, in, visit);
        }
    }
}

std::string ref_list(const std::vector<BlockRef>& refs) {
    std::string out;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (i) out += "+";
        out += to_string(refs[i]);
    }
    return out;
}

std::string insertion_label(const InsertionSpec& ins) {
    if (ins.kind == InsertionKind::nl) return "nl@" + to_string(ins.host);
    return "cnl@" + to_string(ins.host) + "<-" + ref_list(ins.responses);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::size_t insertion_embed(const ArchSpec& spec, const InsertionSpec& ins) {
    if (ins.embed != 0) return ins.embed;
    const std::size_t c = block_geometry(spec, ins.host, spec.input_size).channels;
    return ins.kind == InsertionKind::nl ? default_nl_embed(c) : default_cnl_embed(c);
}

std::uint64_t backbone_params(const ArchSpec& spec) {
    std::uint64_t total = 0;
    for (const auto& stage : spec.stages) {
        total += layers_params(stage.entry);
        for (const auto& block : stage.blocks) total += layers_params(block.body) + layers_params(block.shortcut);
    }
    const std::uint64_t c = spec.feature_channels();
    total += c * spec.num_classes + (spec.classifier_bias ? spec.num_classes : 0);
    return total;
}

std::uint64_t insertion_params(const ArchSpec& spec, const InsertionSpec& ins) {
    const std::uint64_t ce = insertion_embed(spec, ins);
    const std::uint64_t cq = block_geometry(spec, ins.host, spec.input_size).channels;
    if (ins.kind == InsertionKind::nl) return 4 * cq * ce + 2 * cq;
    std::uint64_t total = cq * ce + ce * cq + 2 * cq;
    for (const auto& r : ins.responses) {
        total += 2 * static_cast<std::uint64_t>(block_geometry(spec, r, spec.input_size).channels) * ce;
    }
    return total;
}

std::uint64_t count_params(const ArchSpec& spec) {
    std::uint64_t total = backbone_params(spec);
    for (const auto& ins : spec.insertions) total += insertion_params(spec, ins);
    return total;
}

std::uint64_t backbone_flops(const ArchSpec& spec, std::size_t input_size, FlopConvention convention) {
    std::uint64_t total = 0;
    walk_all_layers(spec, input_size, [&](const LayerSpec& l, const Geometry&, const Geometry& out) {
        if (l.kind == LayerKind::conv) {
            total += matmul_flops(out.positions(), static_cast<std::uint64_t>(l.kernel) * l.kernel * l.in_channels,
                                  l.out_channels, convention);
        } else if (l.kind == LayerKind::linear) {
            total += matmul_flops(1, l.in_channels, l.out_channels, convention);
        }
    });
    total += matmul_flops(1, spec.feature_channels(), spec.num_classes, convention);
    return total;
}

std::uint64_t insertion_flops(const ArchSpec& spec, const InsertionSpec& ins, std::size_t input_size,
                              FlopConvention convention) {
    const std::uint64_t ce = insertion_embed(spec, ins);
    const Geometry q = block_geometry(spec, ins.host, input_size);
    const std::uint64_t nq = q.positions();
    // θ on the query and z back to its width.
    std::uint64_t total = matmul_flops(nq, q.channels, ce, convention) + matmul_flops(nq, ce, q.channels, convention);
    auto branch = [&](const Geometry& r) {
        const std::uint64_t nr = r.positions();
        total += 2 * matmul_flops(nr, r.channels, ce, convention);  // φ, g
        total += matmul_flops(nq, ce, nr, convention);              // θφᵀ
        total += matmul_flops(nq, nr, ce, convention);              // A·g
    };
    if (ins.kind == InsertionKind::nl) {
        branch(q);
    } else {
        for (const auto& r : ins.responses) branch(block_geometry(spec, r, input_size));
    }
    return total;
}

std::uint64_t count_flops(const ArchSpec& spec, std::size_t input_size, FlopConvention convention) {
    std::uint64_t total = backbone_flops(spec, input_size, convention);
    for (const auto& ins : spec.insertions) total += insertion_flops(spec, ins, input_size, convention);
    return total;
}

std::uint64_t nl_attention_entries(std::size_t height, std::size_t width) {
    const std::uint64_t n = static_cast<std::uint64_t>(height) * width;
    return n * n;
}

std::uint64_t cnl_attention_entries(std::size_t query_positions, const std::vector<std::size_t>& response_positions) {
    std::uint64_t sum = 0;
    for (std::size_t r : response_positions) sum += r;
    return static_cast<std::uint64_t>(query_positions) * sum;
}

std::uint64_t attention_memory(const InsertionSpec& ins, const ArchSpec& spec, std::size_t input_size) {
    const Geometry q = block_geometry(spec, ins.host, input_size);
    if (ins.kind == InsertionKind::nl) return nl_attention_entries(q.height, q.width);
    std::vector<std::size_t> positions;
    for (const auto& r : ins.responses) positions.push_back(block_geometry(spec, r, input_size).positions());
    return cnl_attention_entries(q.positions(), positions);
}

std::uint64_t total_attention_memory(const ArchSpec& spec, std::size_t input_size) {
    std::uint64_t total = 0;
    for (const auto& ins : spec.insertions) total += attention_memory(ins, spec, input_size);
    return total;
}

ReceptiveField receptive_field(const ArchSpec& spec, std::string_view layer) {
    ReceptiveField rf;
    rf.layer = std::string(layer);
    if (layer == "input") return rf;

    auto step = [&](const LayerSpec& l) {
        if (l.kind != LayerKind::conv && l.kind != LayerKind::max_pool && l.kind != LayerKind::avg_pool) return;
        rf.rf_size += (l.kernel - 1) * rf.jump;
        rf.start += ((static_cast<double>(l.kernel) - 1.0) / 2.0 - static_cast<double>(l.padding)) *
                    static_cast<double>(rf.jump);
        rf.jump *= l.stride;
    };
    for (const auto& stage : spec.stages) {
        for (const auto& l : stage.entry) {
            step(l);
            if (l.name == layer) return rf;
        }
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            const BlockSpec& block = stage.blocks[b];
            for (const auto& l : block.body) {
                step(l);
                if (l.name == layer) return rf;
            }
            const bool last = b + 1 == stage.blocks.size();
            if (block.name == layer || to_string(BlockRef{stage.name, b + 1}) == layer ||
                (last && stage.name == layer)) {
                return rf;
            }
        }
    }
    throw std::invalid_argument("no layer '" + std::string(layer) + "' in '" + spec.name + "'");
}

std::optional<double> CostReport::memory_reduction() const {
    if (nl_equivalent_entries == 0) return std::nullopt;
    return 1.0 - static_cast<double>(attention_entries) / static_cast<double>(nl_equivalent_entries);
}

CostReport cost_report(const ArchSpec& spec, std::size_t input_size, FlopConvention convention) {
    CostReport r;
    r.spec_name = spec.name;
    r.input_size = input_size;
    r.num_classes = spec.num_classes;
    r.convention = convention;
    r.backbone_params = backbone_params(spec);
    r.backbone_flops = backbone_flops(spec, input_size, convention);
    r.param_count = r.backbone_params;
    r.flop_count = r.backbone_flops;
    for (const auto& ins : spec.insertions) {
        InsertionCost c;
        c.label = insertion_label(ins);
        c.kind = ins.kind;
        c.embed = insertion_embed(spec, ins);
        c.params = insertion_params(spec, ins);
        c.flops = insertion_flops(spec, ins, input_size, convention);
        c.attention_entries = attention_memory(ins, spec, input_size);
        if (ins.kind == InsertionKind::nl) {
            c.nl_equivalent_entries = c.attention_entries;
        } else {
            for (const auto& t : ins.responses) {
                const Geometry g = block_geometry(spec, t, input_size);
                c.nl_equivalent_entries += nl_attention_entries(g.height, g.width);
            }
        }
        r.param_count += c.params;
        r.flop_count += c.flops;
        r.attention_entries += c.attention_entries;
        r.nl_equivalent_entries += c.nl_equivalent_entries;
        r.insertions.push_back(std::move(c));
    }
    return r;
}

std::string CostReport::to_csv() const {
    std::ostringstream out;
    out << "item,kind,embed,params,flops,attention_entries,nl_equivalent_entries\n";
    out << "backbone,backbone,," << backbone_params << "," << backbone_flops << ",0,0\n";
    for (const auto& c : insertions) {
        out << io::csv_escape(c.label) << "," << (c.kind == InsertionKind::nl ? "nl" : "cnl") << "," << c.embed << ","
            << c.params << "," << c.flops << "," << c.attention_entries << "," << c.nl_equivalent_entries << "\n";
    }
    out << "total,total,," << param_count << "," << flop_count << "," << attention_entries << ","
        << nl_equivalent_entries << "\n";
    return out.str();
}

std::string CostReport::to_table() const {
    std::ostringstream out;
    out << spec_name << " @ " << input_size << "x" << input_size << ", " << num_classes << " classes, FLOPs as "
        << to_string(convention) << "\n";
    std::size_t width = 8;
    for (const auto& c : insertions) width = std::max(width, c.label.size());
    const int w = static_cast<int>(width);
    char line[128];
    std::snprintf(line, sizeof line, " %12s %16s %16s\n", "params", "flops", "attn entries");
    out << std::left << std::setw(w) << "item" << std::right << line;
    auto row = [&](const std::string& name, std::uint64_t p, std::uint64_t f, std::uint64_t a) {
        std::snprintf(line, sizeof line, " %12llu %16llu %16llu\n", static_cast<unsigned long long>(p),
                      static_cast<unsigned long long>(f), static_cast<unsigned long long>(a));
        out << std::left << std::setw(w) << name << std::right << line;
    };
    row("backbone", backbone_params, backbone_flops, 0);
    for (const auto& c : insertions) row(c.label, c.params, c.flops, c.attention_entries);
    row("total", param_count, flop_count, attention_entries);
    if (!insertions.empty()) {
        const double added_flops = static_cast<double>(flop_count - backbone_flops);
        out << "added params: " << (param_count - backbone_params) << " ("
            << fixed(static_cast<double>(param_count - backbone_params) / 1e7, 3) << "e7)\n";
        out << "added FLOPs: " << (flop_count - backbone_flops) << " ("
            << fixed(100.0 * added_flops / static_cast<double>(backbone_flops), 2) << "% of backbone)\n";
        if (auto red = memory_reduction()) {
            out << "attention entries vs NL at the same layers: " << attention_entries << " vs "
                << nl_equivalent_entries << " (reduction " << fixed(100.0 * *red, 2) << "%)\n";
        }
    }
    return out.str();
}

std::optional<PublishedCosts> published_costs(std::string_view spec_name) {
    if (spec_name == "resnet50") return PublishedCosts{"resnet50", 2.39, 3.13, 2.71};
    if (spec_name == "resnet101") return PublishedCosts{"resnet101", 4.29, 5.03, 4.61};
    return std::nullopt;
}

std::vector<std::string> reference_notes(const ArchSpec& spec, std::size_t input_size) {
    std::vector<std::string> notes;
    const auto pub = published_costs(spec.name);
    if (!pub || spec.num_classes != 200) return notes;

    ArchSpec base = spec;
    base.insertions.clear();
    const ArchSpec nl = with_preset(base, "nl5");
    const ArchSpec cnl = with_preset(base, "cnl5");
    const double p0 = static_cast<double>(count_params(base)) / 1e7;
    const double p_nl = static_cast<double>(count_params(nl)) / 1e7;
    const double p_cnl = static_cast<double>(count_params(cnl)) / 1e7;
    notes.push_back("published params (1e7): baseline " + fixed(pub->baseline, 2) + ", +NL " + fixed(pub->nl, 2) +
                    ", +CNL " + fixed(pub->cnl, 2) + "; computed: baseline " + fixed(p0, 3) + ", +NL " +
                    fixed(p_nl, 3) + ", +CNL " + fixed(p_cnl, 3));
    notes.push_back("published deltas (1e7): NL " + fixed(pub->nl - pub->baseline, 2) + ", CNL " +
                    fixed(pub->cnl - pub->baseline, 2) + "; computed: NL " + fixed(p_nl - p0, 4) + ", CNL " +
                    fixed(p_cnl - p0, 4));
    if (spec.name == "resnet101") {
        notes.push_back("published reference values disagree: the CNL saving over NL is stated as 0.74e7 in the text "
                        "but the table gives " +
                        fixed(pub->nl - pub->cnl, 2) + "e7 (5.03 - 4.61); computed saving " + fixed(p_nl - p_cnl, 4) +
                        "e7");
        const double b = static_cast<double>(count_flops(base, input_size, FlopConvention::mac1));
        const double c = static_cast<double>(count_flops(cnl, input_size, FlopConvention::mac1));
        notes.push_back("published CNL FLOP overhead 11.7%; computed at " + std::to_string(input_size) + "x" +
                        std::to_string(input_size) + ": " + fixed(100.0 * (c - b) / b, 2) + "%");
    }
    return notes;
}

}  // namespace cnl
