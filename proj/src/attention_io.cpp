// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/attention_io.hpp"

#include <cstdlib>
#include <stdexcept>

#include "cnl/io.hpp"

namespace cnl {

namespace {

void write_matrix_csv(const std::filesystem::path& path, std::span<const double> values, std::size_t rows,
                      std::size_t cols) {
    std::string text = std::to_string(rows) + "," + std::to_string(cols) + "\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c) text += ',';
            text += io::format_double(values[r * cols + c]);
        }
        text += '\n';
    }
    io::write_text(path, text);
}

std::span<const double> query_row(const AttentionMap& map, std::size_t query_position, std::size_t height,
                                  std::size_t width) {
    const Tensor& m = map.matrix;
    if (query_position >= m.rows()) {
        throw std::out_of_range("query position " + std::to_string(query_position) + " outside " +
                                std::to_string(m.rows()) + " query positions");
    }
    if (height * width != m.cols()) throw ShapeError("response grid does not match attention map width");
    return m.data().subspan(query_position * m.cols(), m.cols());
}

}  // namespace

void write_attention_csv(const std::filesystem::path& path, const AttentionMap& map) {
    write_matrix_csv(path, map.matrix.data(), map.matrix.rows(), map.matrix.cols());
}

void write_attention_pgm(const std::filesystem::path& path, const AttentionMap& map) {
    io::write_pgm(path, io::to_gray(map.matrix.data(), map.matrix.rows(), map.matrix.cols()));
}

void write_query_map_csv(const std::filesystem::path& path, const AttentionMap& map, std::size_t query_position,
                         std::size_t height, std::size_t width) {
    write_matrix_csv(path, query_row(map, query_position, height, width), height, width);
}

void write_query_map_pgm(const std::filesystem::path& path, const AttentionMap& map, std::size_t query_position,
                         std::size_t height, std::size_t width) {
    io::write_pgm(path, io::to_gray(query_row(map, query_position, height, width), height, width));
}

Tensor read_matrix_csv(const std::filesystem::path& path) {
    const auto rows = io::read_csv(path);
    if (rows.empty() || rows[0].size() != 2) throw std::runtime_error(path.string() + ": missing extents line");
    const std::size_t nr = std::stoul(rows[0][0]);
    const std::size_t nc = std::stoul(rows[0][1]);
    if (rows.size() != nr + 1) throw std::runtime_error(path.string() + ": row count disagrees with header");
    Tensor out({nr, nc});
    for (std::size_t r = 0; r < nr; ++r) {
        if (rows[r + 1].size() != nc) throw std::runtime_error(path.string() + ": ragged row");
        for (std::size_t c = 0; c < nc; ++c) out[r * nc + c] = std::strtod(rows[r + 1][c].c_str(), nullptr);
    }
    return out;
}

}  // namespace cnl
