// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "cnl/io.hpp"
#include "cnl/train.hpp"

namespace cnl {

void SyntheticDatasetSpec::validate() const {
    if (large_kinds < 1 || large_kinds > 4) throw std::invalid_argument("large_kinds must be in 1..4");
    if (small_kinds < 1 || small_kinds > 2) throw std::invalid_argument("small_kinds must be in 1..2");
    if (classes() < 2) throw std::invalid_argument("the dataset needs at least 2 classes");
    if (large_size < 8) throw std::invalid_argument("large_size must be at least 8");
    // Room for the large motif plus a clear band for the small one.
    if (image_size < large_size + kSmallMotifSize + 4) {
        throw std::invalid_argument("image_size " + std::to_string(image_size) + " too small for a " +
                                    std::to_string(large_size) + "-pixel motif and a separate small motif");
    }
    if (!(noise >= 0) || !std::isfinite(noise)) throw std::invalid_argument("noise must be finite and non-negative");
    if (train_count == 0 || test_count == 0) throw std::invalid_argument("sample counts must be positive");
}

SyntheticDatasetSpec SyntheticDatasetSpec::with_classes(std::size_t classes) {
    SyntheticDatasetSpec spec;
    if (classes < 2 || classes % 2 != 0 || classes > 8) {
        throw std::invalid_argument("synthetic dataset supports 2, 4, 6 or 8 classes, got " + std::to_string(classes));
    }
    spec.small_kinds = 2;
    spec.large_kinds = classes / 2;
    return spec;
}

std::vector<std::uint8_t> large_motif_mask(LargeMotif kind, std::size_t size) {
    std::vector<std::uint8_t> mask(size * size, 0);
    const double c = static_cast<double>(size) / 2.0;
    const double r = c;
    const double ring_width = std::max(2.0, r / 3.0);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double dy = static_cast<double>(y) + 0.5 - c;
            const double dx = static_cast<double>(x) + 0.5 - c;
            const double d = std::sqrt(dy * dy + dx * dx);
            bool in = false;
            switch (kind) {
                case LargeMotif::square: in = true; break;
                case LargeMotif::disc: in = d <= r; break;
                case LargeMotif::diamond: in = std::abs(dy) + std::abs(dx) <= r; break;
                case LargeMotif::ring: in = d <= r && d >= r - ring_width; break;
            }
            mask[y * size + x] = in ? 1 : 0;
        }
    }
    return mask;
}

std::vector<std::uint8_t> small_motif_mask(SmallMotif kind) {
    constexpr std::size_t n = kSmallMotifSize;
    std::vector<std::uint8_t> mask(n * n, 0);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const bool border = y == 0 || x == 0 || y + 1 == n || x + 1 == n;
            const bool in = kind == SmallMotif::block || border;
            mask[y * n + x] = in ? 1 : 0;
        }
    }
    return mask;
}

std::span<const double> Dataset::image(std::size_t i) const {
    const std::size_t n = image_size * image_size;
    return std::span<const double>(pixels).subspan(i * n, n);
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    const std::size_t n = image_size * image_size;
    Tensor out({indices.size(), image_size, image_size, 1});
    auto dst = out.data();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto src = image(indices[b]);
        std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * n));
    }
    return out;
}

bool is_test_layout(std::size_t ly, std::size_t lx, std::size_t sy, std::size_t sx) {
    // splitmix64 finalizer over the packed offsets.
    std::uint64_t z = (static_cast<std::uint64_t>(ly) << 48) ^ (static_cast<std::uint64_t>(lx) << 32) ^
                      (static_cast<std::uint64_t>(sy) << 16) ^ static_cast<std::uint64_t>(sx);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z % 5 == 0;
}

namespace {

Dataset generate_split(const SyntheticDatasetSpec& spec, std::size_t count, bool test,
                       std::mt19937_64& rng) {
    const std::size_t s = spec.image_size;
    const std::size_t l = spec.large_size;
    constexpr std::size_t m = kSmallMotifSize;
    std::vector<std::vector<std::uint8_t>> large, small;
    for (std::size_t k = 0; k < spec.large_kinds; ++k) large.push_back(large_motif_mask(static_cast<LargeMotif>(k), l));
    for (std::size_t k = 0; k < spec.small_kinds; ++k) small.push_back(small_motif_mask(static_cast<SmallMotif>(k)));

    Dataset data;
    data.image_size = s;
    data.classes = spec.classes();
    data.pixels.assign(count * s * s, 0.0);
    data.labels.resize(count);
    std::uniform_int_distribution<std::size_t> large_pos(0, s - l);
    std::uniform_int_distribution<std::size_t> small_pos(0, s - m);
    std::normal_distribution<double> noise(0.0, 1.0);

    for (std::size_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(i % data.classes);
        data.labels[i] = label;
        const auto& big = large[static_cast<std::size_t>(label) / spec.small_kinds];
        const auto& glyph = small[static_cast<std::size_t>(label) % spec.small_kinds];
        const std::size_t ly = large_pos(rng);
        const std::size_t lx = large_pos(rng);
        std::size_t sy = 0, sx = 0;
        for (;;) {
            sy = small_pos(rng);
            sx = small_pos(rng);
            if (is_test_layout(ly, lx, sy, sx) != test) continue;
            // Keep one background pixel between the two motifs.
            const bool apart = sy + m + 1 <= ly || ly + l + 1 <= sy || sx + m + 1 <= lx || lx + l + 1 <= sx;
            if (apart) break;
        }
        double* img = data.pixels.data() + i * s * s;
        for (std::size_t y = 0; y < l; ++y) {
            for (std::size_t x = 0; x < l; ++x) {
                if (big[y * l + x]) img[(ly + y) * s + lx + x] = 0.5;
            }
        }
        for (std::size_t y = 0; y < m; ++y) {
            for (std::size_t x = 0; x < m; ++x) {
                if (glyph[y * m + x]) img[(sy + y) * s + sx + x] = 1.0;
            }
        }
        if (spec.noise > 0) {
            for (std::size_t p = 0; p < s * s; ++p) img[p] += spec.noise * noise(rng);
        }
    }
    return data;
}

}  // namespace

DatasetSplit generate_dataset(const SyntheticDatasetSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::seed_seq train_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0u};
    std::seed_seq test_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 1u};
    std::mt19937_64 train_rng(train_seq);
    std::mt19937_64 test_rng(test_seq);
    DatasetSplit split;
    split.train = generate_split(spec, spec.train_count, false, train_rng);
    split.test = generate_split(spec, spec.test_count, true, test_rng);
    return split;
}

void dump_dataset(const Dataset& data, const std::filesystem::path& dir, const std::string& prefix) {
    std::filesystem::create_directories(dir);
    io::CsvWriter labels(dir / (prefix + "_labels.csv"));
    labels.row({"file", "label"});
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%05zu.pgm", prefix.c_str(), i);
        io::write_pgm(dir / name, io::to_gray(data.image(i), data.image_size, data.image_size));
        labels.row({name, std::to_string(data.labels[i])});
    }
    labels.close();
}

}  // namespace cnl
