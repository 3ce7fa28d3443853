// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Declarative CNN descriptions with non-local insertion points.
//
// An ArchSpec is an ordered list of stages, each an optional list of entry layers
// (e.g. the max-pool opening ResNet's res2) followed by blocks. Blocks are plain layer
// sequences or residual ones (out = relu(body(x) + shortcut(x)), identity shortcut when
// `shortcut` is empty). A global-average-pool + linear classifier closes the network.
//
// Blocks are addressed 1-based inside their stage: {"res4", 2} is the output of the
// second res4 block.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cnl {

enum class LayerKind { conv, norm, relu, max_pool, avg_pool, linear };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::conv;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool bias = false;
};

struct BlockSpec {
    std::string name;
    bool residual = false;
    std::vector<LayerSpec> body;
    std::vector<LayerSpec> shortcut;
};

struct StageSpec {
    std::string name;
    std::size_t out_channels = 0;
    std::size_t spatial_stride = 1;
    std::vector<LayerSpec> entry;
    std::vector<BlockSpec> blocks;

    std::size_t block_count() const { return blocks.size(); }
};

struct BlockRef {
    std::string stage;
    std::size_t block = 1;  // 1-based

    friend bool operator==(const BlockRef&, const BlockRef&) = default;
};

std::string to_string(const BlockRef& ref);

enum class InsertionKind { nl, cnl };

/// NL: `host` is the wrapped block. CNL: `host` is the query layer and `responses`
/// the tap layers r1..rn, ordered shallow to deep.
struct InsertionSpec {
    InsertionKind kind = InsertionKind::nl;
    BlockRef host;
    std::vector<BlockRef> responses;
    std::size_t embed = 0;  // 0 = default width (C/2 for NL, Cq/8 for CNL)
};

struct ArchSpec {
    std::string name;
    std::size_t input_channels = 3;
    std::size_t input_size = 224;
    std::size_t num_classes = 1000;
    bool classifier_bias = true;
    std::vector<StageSpec> stages;
    std::vector<InsertionSpec> insertions;

    std::size_t feature_channels() const;
    const StageSpec& stage(std::string_view name) const;
};

/// Spatial extent and channels of a feature map.
struct Geometry {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    std::size_t positions() const { return height * width; }
    friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Output geometry of a single layer given its input geometry.
Geometry layer_output(const LayerSpec& layer, const Geometry& in);

/// Output geometry of every stage for a square input of `input_size`.
std::vector<Geometry> stage_geometries(const ArchSpec& spec, std::size_t input_size);
/// Output geometry of one block.
Geometry block_geometry(const ArchSpec& spec, const BlockRef& ref, std::size_t input_size);

/// Throws std::invalid_argument on broken channel chains, stage metadata that
/// disagrees with the layers, dangling insertion references, or misordered taps.
void validate(const ArchSpec& spec);

/// Canonical bottleneck ResNet (torchvision layout, stride on the 3×3 conv).
ArchSpec resnet_spec(int depth, std::size_t input_size = 224, std::size_t num_classes = 1000);

/// Executable desk-scale backbone. Every stage halves the resolution with a 3×3
/// stride-2 conv + norm + relu; further blocks in a stage are residual 3×3 conv + norm.
/// `blocks_per_stage` empty selects the preset-friendly default: 2 blocks in the
/// third-from-last stage, 3 in the second-from-last, 1 elsewhere.
ArchSpec toy_spec(const std::vector<std::size_t>& stage_channels, std::size_t input_size, std::size_t num_classes,
                  std::vector<std::size_t> blocks_per_stage = {}, std::size_t input_channels = 1);

/// Block numbers for `count` insertions spread evenly over `blocks` blocks:
/// floor(k·blocks/count) for k = 1..count.
std::vector<std::size_t> regular_interval(std::size_t blocks, std::size_t count);

/// Insertion presets: "baseline" (none), "nl5" (2 NL blocks in the third-from-last
/// stage, 3 in the second-from-last) and "cnl5" (the same five layers as CNL responses,
/// the last block of the last stage as query).
std::vector<InsertionSpec> preset_insertions(const ArchSpec& spec, std::string_view preset, std::size_t embed = 0);
ArchSpec with_preset(ArchSpec spec, std::string_view preset, std::size_t embed = 0);
bool is_preset(std::string_view preset);

/// True when every layer is one the toy executor runs (conv, norm, relu).
bool is_executable(const ArchSpec& spec);

/// JSON text form; see docs/arch_schema.md.
std::string to_json(const ArchSpec& spec);
ArchSpec arch_from_json(std::string_view text);

}  // namespace cnl
