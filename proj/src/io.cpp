// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cnl::io {

std::string format_double(double value) {
    if (value == 0.0) return "0";
    char buf[40];
    // Shortest of %.15g/%.16g/%.17g that parses back to the same double.
    for (int precision : {15, 16, 17}) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, value);
        if (std::strtod(buf, nullptr) == value) break;
    }
    return buf;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : path_(path) {}

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) buffer_ += ',';
        buffer_ += csv_escape(fields[i]);
    }
    buffer_ += '\n';
}

void CsvWriter::close() {
    if (closed_) return;
    closed_ = true;
    write_text(path_, buffer_);
}

CsvWriter::~CsvWriter() {
    try {
        close();
    } catch (...) {
    }
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> current;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
            continue;
        }
        any = true;
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            current.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            current.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(current));
            current.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (any || !field.empty() || !current.empty()) {
        current.push_back(std::move(field));
        rows.push_back(std::move(current));
    }
    return rows;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
    if (image.pixels.size() != image.width * image.height) throw std::invalid_argument("write_pgm: pixel count");
    std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(image.pixels.begin(), image.pixels.end());
    write_text(path, out);
}

GrayImage read_pgm(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < text.size()) {
            if (text[pos] == '#') {
                while (pos < text.size() && text[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(text[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
        return text.substr(start, pos - start);
    };
    if (next_token() != "P5") throw std::runtime_error(path.string() + ": not a binary PGM (P5)");
    GrayImage image;
    image.width = std::stoul(next_token());
    image.height = std::stoul(next_token());
    if (std::stoul(next_token()) != 255) throw std::runtime_error(path.string() + ": only maxval 255 supported");
    ++pos;  // single whitespace after maxval
    if (text.size() < pos + image.width * image.height) throw std::runtime_error(path.string() + ": truncated PGM");
    image.pixels.assign(text.begin() + static_cast<std::ptrdiff_t>(pos),
                        text.begin() + static_cast<std::ptrdiff_t>(pos + image.width * image.height));
    return image;
}

GrayImage to_gray(std::span<const double> values, std::size_t rows, std::size_t cols) {
    if (values.size() != rows * cols) throw std::invalid_argument("to_gray: size mismatch");
    GrayImage image{cols, rows, std::vector<std::uint8_t>(rows * cols, 0)};
    if (values.empty()) return image;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double span = *hi - *lo;
    if (span <= 0.0) return image;
    for (std::size_t i = 0; i < values.size(); ++i) {
        image.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - *lo) / span));
    }
    return image;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace cnl::io
