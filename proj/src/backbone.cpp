// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/backbone.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace cnl {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::norm: return "norm";
        case LayerKind::relu: return "relu";
        case LayerKind::max_pool: return "max_pool";
        case LayerKind::avg_pool: return "avg_pool";
        case LayerKind::linear: return "linear";
    }
    return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
    for (LayerKind k : {LayerKind::conv, LayerKind::norm, LayerKind::relu, LayerKind::max_pool, LayerKind::avg_pool,
                        LayerKind::linear}) {
        if (to_string(k) == text) return k;
    }
    throw std::invalid_argument("unknown layer kind '" + std::string(text) + "'");
}

std::string to_string(const BlockRef& ref) { return ref.stage + "[" + std::to_string(ref.block) + "]"; }

std::size_t ArchSpec::feature_channels() const {
    if (stages.empty()) throw std::invalid_argument("architecture '" + name + "' has no stages");
    return stages.back().out_channels;
}

const StageSpec& ArchSpec::stage(std::string_view stage_name) const {
    for (const auto& s : stages) {
        if (s.name == stage_name) return s;
    }
    throw std::invalid_argument("architecture '" + name + "' has no stage '" + std::string(stage_name) + "'");
}

Geometry layer_output(const LayerSpec& layer, const Geometry& in) {
    switch (layer.kind) {
        case LayerKind::conv:
        case LayerKind::max_pool:
        case LayerKind::avg_pool: {
            if (layer.kernel == 0 || layer.stride == 0) {
                throw std::invalid_argument(layer.name + ": kernel and stride must be positive");
            }
            if (in.height + 2 * layer.padding < layer.kernel || in.width + 2 * layer.padding < layer.kernel) {
                throw std::invalid_argument(layer.name + ": input " + std::to_string(in.height) + "x" +
                                            std::to_string(in.width) + " smaller than kernel");
            }
            Geometry out;
            out.height = (in.height + 2 * layer.padding - layer.kernel) / layer.stride + 1;
            out.width = (in.width + 2 * layer.padding - layer.kernel) / layer.stride + 1;
            out.channels = layer.kind == LayerKind::conv ? layer.out_channels : in.channels;
            return out;
        }
        case LayerKind::norm:
        case LayerKind::relu:
            return in;
        case LayerKind::linear:
            return Geometry{1, 1, layer.out_channels};
    }
    return in;
}

namespace {

Geometry walk_layers(const std::vector<LayerSpec>& layers, Geometry g, bool check) {
    for (const auto& layer : layers) {
        if (check && (layer.kind == LayerKind::conv || layer.kind == LayerKind::norm ||
                      layer.kind == LayerKind::linear) &&
            layer.in_channels != g.channels) {
            throw std::invalid_argument(layer.name + ": expects " + std::to_string(layer.in_channels) +
                                        " input channels, receives " + std::to_string(g.channels));
        }
        if (check && layer.kind == LayerKind::norm && layer.out_channels != 0 &&
            layer.out_channels != layer.in_channels) {
            throw std::invalid_argument(layer.name + ": normalization cannot change channel count");
        }
        g = layer_output(layer, g);
    }
    return g;
}

Geometry walk_block(const BlockSpec& block, const Geometry& in, bool check) {
    const Geometry out = walk_layers(block.body, in, check);
    if (block.residual) {
        const Geometry skip = walk_layers(block.shortcut, in, check);
        if (check && skip != out) {
            throw std::invalid_argument(block.name + ": shortcut output does not match the block body");
        }
    }
    return out;
}

template <typename Visitor>
void walk(const ArchSpec& spec, std::size_t input_size, bool check, Visitor&& visit) {
    Geometry g{input_size, input_size, spec.input_channels};
    for (const auto& stage : spec.stages) {
        g = walk_layers(stage.entry, g, check);
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            g = walk_block(stage.blocks[b], g, check);
            visit(stage, b + 1, g);
        }
    }
}

std::size_t layer_stride(const std::vector<LayerSpec>& layers) {
    std::size_t s = 1;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::conv || l.kind == LayerKind::max_pool || l.kind == LayerKind::avg_pool) s *= l.stride;
    }
    return s;
}

// Position of a block in network order, for ordering checks.
std::optional<std::size_t> block_order(const ArchSpec& spec, const BlockRef& ref) {
    std::size_t index = 0;
    for (const auto& stage : spec.stages) {
        if (stage.name == ref.stage) {
            if (ref.block == 0 || ref.block > stage.blocks.size()) return std::nullopt;
            return index + ref.block - 1;
        }
        index += stage.blocks.size();
    }
    return std::nullopt;
}

}  // namespace

std::vector<Geometry> stage_geometries(const ArchSpec& spec, std::size_t input_size) {
    std::vector<Geometry> out;
    walk(spec, input_size, false, [&](const StageSpec& stage, std::size_t block, const Geometry& g) {
        if (block == stage.blocks.size()) out.push_back(g);
    });
    return out;
}

Geometry block_geometry(const ArchSpec& spec, const BlockRef& ref, std::size_t input_size) {
    std::optional<Geometry> found;
    walk(spec, input_size, false, [&](const StageSpec& stage, std::size_t block, const Geometry& g) {
        if (stage.name == ref.stage && block == ref.block) found = g;
    });
    if (!found) throw std::invalid_argument("no block " + to_string(ref) + " in '" + spec.name + "'");
    return *found;
}

void validate(const ArchSpec& spec) {
    if (spec.stages.empty()) throw std::invalid_argument("architecture '" + spec.name + "' has no stages");
    if (spec.input_channels == 0 || spec.input_size == 0 || spec.num_classes == 0) {
        throw std::invalid_argument("architecture '" + spec.name + "' needs positive input and class counts");
    }
    std::set<std::string> names;
    for (const auto& stage : spec.stages) {
        if (!names.insert(stage.name).second) throw std::invalid_argument("duplicate stage name '" + stage.name + "'");
        if (stage.blocks.empty()) throw std::invalid_argument("stage '" + stage.name + "' has no blocks");
        std::size_t stride = layer_stride(stage.entry);
        for (const auto& block : stage.blocks) stride *= layer_stride(block.body);
        if (stride != stage.spatial_stride) {
            throw std::invalid_argument("stage '" + stage.name + "' declares stride " +
                                        std::to_string(stage.spatial_stride) + " but its layers stride by " +
                                        std::to_string(stride));
        }
    }
    walk(spec, spec.input_size, true, [&](const StageSpec& stage, std::size_t block, const Geometry& g) {
        if (block == stage.blocks.size() && g.channels != stage.out_channels) {
            throw std::invalid_argument("stage '" + stage.name + "' declares " + std::to_string(stage.out_channels) +
                                        " output channels but produces " + std::to_string(g.channels));
        }
    });

    for (const auto& ins : spec.insertions) {
        const auto host = block_order(spec, ins.host);
        if (!host) throw std::invalid_argument("insertion refers to missing block " + to_string(ins.host));
        if (ins.kind == InsertionKind::nl) {
            if (!ins.responses.empty()) throw std::invalid_argument("NL insertion cannot carry response taps");
            continue;
        }
        if (ins.responses.empty()) throw std::invalid_argument("CNL insertion needs at least one response tap");
        std::optional<std::size_t> previous;
        for (const auto& r : ins.responses) {
            const auto pos = block_order(spec, r);
            if (!pos) throw std::invalid_argument("CNL tap refers to missing block " + to_string(r));
            if (previous && *pos <= *previous) {
                throw std::invalid_argument("CNL taps must be ordered shallow to deep, " + to_string(r) +
                                            " is out of order");
            }
            if (*pos > *host) {
                throw std::invalid_argument("CNL tap " + to_string(r) + " lies after its query " +
                                            to_string(ins.host));
            }
            previous = pos;
        }
    }
}

namespace {

LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t p,
               bool bias = false) {
    return LayerSpec{std::move(name), LayerKind::conv, in, out, k, s, p, bias};
}

LayerSpec norm(std::string name, std::size_t c) { return LayerSpec{std::move(name), LayerKind::norm, c, c, 1, 1, 0, false}; }

LayerSpec relu(std::string name, std::size_t c) { return LayerSpec{std::move(name), LayerKind::relu, c, c, 1, 1, 0, false}; }

}  // namespace

ArchSpec resnet_spec(int depth, std::size_t input_size, std::size_t num_classes) {
    std::vector<std::size_t> counts;
    if (depth == 50) {
        counts = {3, 4, 6, 3};
    } else if (depth == 101) {
        counts = {3, 4, 23, 3};
    } else {
        throw std::invalid_argument("unsupported ResNet depth " + std::to_string(depth) + " (expected 50 or 101)");
    }
    ArchSpec spec;
    spec.name = "resnet" + std::to_string(depth);
    spec.input_channels = 3;
    spec.input_size = input_size;
    spec.num_classes = num_classes;

    StageSpec stem{"conv1", 64, 2, {}, {}};
    stem.blocks.push_back(BlockSpec{"conv1", false, {conv("conv1", 3, 64, 7, 2, 3), norm("bn1", 64), relu("relu", 64)}, {}});
    spec.stages.push_back(std::move(stem));

    std::size_t in = 64;
    const std::size_t widths[] = {64, 128, 256, 512};
    for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t mid = widths[s];
        const std::size_t out = mid * 4;
        StageSpec stage;
        stage.name = "res" + std::to_string(s + 2);
        stage.out_channels = out;
        stage.spatial_stride = 2;
        if (s == 0) {
            stage.entry.push_back(LayerSpec{stage.name + ".pool", LayerKind::max_pool, in, in, 3, 2, 1, false});
        }
        for (std::size_t b = 0; b < counts[s]; ++b) {
            const std::string p = stage.name + ".b" + std::to_string(b + 1);
            const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
            BlockSpec block;
            block.name = p;
            block.residual = true;
            block.body = {conv(p + ".conv1", in, mid, 1, 1, 0), norm(p + ".bn1", mid),  relu(p + ".relu1", mid),
                          conv(p + ".conv2", mid, mid, 3, stride, 1), norm(p + ".bn2", mid), relu(p + ".relu2", mid),
                          conv(p + ".conv3", mid, out, 1, 1, 0), norm(p + ".bn3", out)};
            if (b == 0) block.shortcut = {conv(p + ".down.conv", in, out, 1, stride, 0), norm(p + ".down.bn", out)};
            stage.blocks.push_back(std::move(block));
            in = out;
        }
        spec.stages.push_back(std::move(stage));
    }
    validate(spec);
    return spec;
}

ArchSpec toy_spec(const std::vector<std::size_t>& stage_channels, std::size_t input_size, std::size_t num_classes,
                  std::vector<std::size_t> blocks_per_stage, std::size_t input_channels) {
    const std::size_t n = stage_channels.size();
    if (n < 3) throw std::invalid_argument("toy backbone needs at least 3 stages for shallow, middle and deep taps");
    if (blocks_per_stage.empty()) {
        blocks_per_stage.assign(n, 1);
        blocks_per_stage[n - 3] = 2;
        blocks_per_stage[n - 2] = 3;
    }
    if (blocks_per_stage.size() != n) throw std::invalid_argument("toy backbone: one block count per stage");

    ArchSpec spec;
    spec.name = "toy";
    spec.input_channels = input_channels;
    spec.input_size = input_size;
    spec.num_classes = num_classes;
    std::size_t in = input_channels;
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t c = stage_channels[s];
        if (blocks_per_stage[s] == 0) throw std::invalid_argument("toy backbone: stages need at least one block");
        StageSpec stage;
        stage.name = "s" + std::to_string(s + 1);
        stage.out_channels = c;
        stage.spatial_stride = 2;
        for (std::size_t b = 0; b < blocks_per_stage[s]; ++b) {
            const std::string p = stage.name + ".b" + std::to_string(b + 1);
            BlockSpec block;
            block.name = p;
            if (b == 0) {
                block.body = {conv(p + ".conv", in, c, 3, 2, 1), norm(p + ".bn", c), relu(p + ".relu", c)};
            } else {
                block.residual = true;
                block.body = {conv(p + ".conv", c, c, 3, 1, 1), norm(p + ".bn", c)};
            }
            stage.blocks.push_back(std::move(block));
        }
        spec.stages.push_back(std::move(stage));
        in = c;
    }
    validate(spec);
    return spec;
}

std::vector<std::size_t> regular_interval(std::size_t blocks, std::size_t count) {
    if (count == 0 || count > blocks) {
        throw std::invalid_argument("cannot place " + std::to_string(count) + " insertions in " +
                                    std::to_string(blocks) + " blocks");
    }
    std::vector<std::size_t> out;
    for (std::size_t k = 1; k <= count; ++k) out.push_back(k * blocks / count);
    return out;
}

bool is_preset(std::string_view preset) { return preset == "baseline" || preset == "nl5" || preset == "cnl5"; }

std::vector<InsertionSpec> preset_insertions(const ArchSpec& spec, std::string_view preset, std::size_t embed) {
    if (!is_preset(preset)) {
        throw std::invalid_argument("unknown preset '" + std::string(preset) + "' (expected baseline, nl5 or cnl5)");
    }
    if (preset == "baseline") return {};
    const std::size_t n = spec.stages.size();
    if (n < 3) throw std::invalid_argument("preset '" + std::string(preset) + "' needs at least 3 stages");
    const StageSpec& shallow = spec.stages[n - 3];
    const StageSpec& middle = spec.stages[n - 2];
    const StageSpec& deep = spec.stages[n - 1];

    std::vector<BlockRef> taps;
    for (std::size_t b : regular_interval(shallow.block_count(), 2)) taps.push_back({shallow.name, b});
    for (std::size_t b : regular_interval(middle.block_count(), 3)) taps.push_back({middle.name, b});

    std::vector<InsertionSpec> out;
    if (preset == "nl5") {
        for (const auto& t : taps) out.push_back(InsertionSpec{InsertionKind::nl, t, {}, embed});
    } else {
        out.push_back(InsertionSpec{InsertionKind::cnl, {deep.name, deep.block_count()}, taps, embed});
    }
    return out;
}

ArchSpec with_preset(ArchSpec spec, std::string_view preset, std::size_t embed) {
    spec.insertions = preset_insertions(spec, preset, embed);
    validate(spec);
    return spec;
}

bool is_executable(const ArchSpec& spec) {
    auto ok = [](const std::vector<LayerSpec>& layers) {
        return std::all_of(layers.begin(), layers.end(), [](const LayerSpec& l) {
            return l.kind == LayerKind::conv || l.kind == LayerKind::norm || l.kind == LayerKind::relu;
        });
    };
    for (const auto& stage : spec.stages) {
        if (!ok(stage.entry)) return false;
        for (const auto& block : stage.blocks) {
            if (!ok(block.body) || !ok(block.shortcut)) return false;
        }
    }
    return true;
}

}  // namespace cnl
