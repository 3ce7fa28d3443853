// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Attention-map export. CSV files start with one line "<rows>,<cols>" giving the
// matrix extents, followed by the values row-major. PGM files are P5 8-bit, min-max
// normalized per map.

#pragma once

#include <filesystem>

#include "cnl/attention.hpp"

namespace cnl {

/// Full [Nq, Nr] matrix.
void write_attention_csv(const std::filesystem::path& path, const AttentionMap& map);
void write_attention_pgm(const std::filesystem::path& path, const AttentionMap& map);

/// Row `query_position` of the map laid out on the response grid [height, width].
void write_query_map_csv(const std::filesystem::path& path, const AttentionMap& map, std::size_t query_position,
                         std::size_t height, std::size_t width);
void write_query_map_pgm(const std::filesystem::path& path, const AttentionMap& map, std::size_t query_position,
                         std::size_t height, std::size_t width);

/// Reads a file written by write_attention_csv / write_query_map_csv.
Tensor read_matrix_csv(const std::filesystem::path& path);

}  // namespace cnl
