// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small file formats shared by the exporters: RFC-4180-style CSV and binary 8-bit PGM.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cnl/tensor.hpp"

namespace cnl::io {

/// Shortest of %.15g, %.16g and %.17g that parses back to the same double.
std::string format_double(double value);

/// Quotes a field when it holds a comma, quote, or line break.
std::string csv_escape(std::string_view field);

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path);
    void row(const std::vector<std::string>& fields);
    std::string str() const { return buffer_; }
    void close();
    ~CsvWriter();

private:
    std::filesystem::path path_;
    std::string buffer_;
    bool closed_ = false;
};

/// Rows of fields; honours quoted fields.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Min-max normalizes a [rows, cols] block of values into 0..255. A constant block maps to 0.
GrayImage to_gray(std::span<const double> values, std::size_t rows, std::size_t cols);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace cnl::io
