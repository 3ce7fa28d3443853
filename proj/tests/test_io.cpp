// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cnl/attention_io.hpp"
#include "cnl/io.hpp"
#include "test_util.hpp"

namespace cnl {
namespace {

using testing::scratch_dir;

TEST(FormatDouble, Examples) {
    EXPECT_EQ(io::format_double(0.0), "0");
    EXPECT_EQ(io::format_double(1.0), "1");
    EXPECT_EQ(io::format_double(-2.5), "-2.5");
    EXPECT_EQ(io::format_double(0.1), "0.1");
}

TEST(FormatDouble, RoundTripsRandomValues) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> mant(-1.0, 1.0);
    std::uniform_int_distribution<int> expo(-300, 300);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::ldexp(mant(rng), expo(rng));
        EXPECT_EQ(std::strtod(io::format_double(v).c_str(), nullptr), v) << io::format_double(v);
    }
    const double tiny = std::numeric_limits<double>::denorm_min();
    EXPECT_EQ(std::strtod(io::format_double(tiny).c_str(), nullptr), tiny);
}

TEST(Csv, EscapeQuotesOnlyWhenNeeded) {
    EXPECT_EQ(io::csv_escape("plain"), "plain");
    EXPECT_EQ(io::csv_escape("a,b"), "\"a,b\"");
    EXPECT_EQ(io::csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
    EXPECT_EQ(io::csv_escape("two\nlines"), "\"two\nlines\"");
    EXPECT_EQ(io::csv_escape(""), "");
}

TEST(Csv, WriterAndReaderRoundTrip) {
    const auto dir = scratch_dir("csv");
    const std::vector<std::vector<std::string>> rows{
        {"name", "value", "note"},
        {"s4[1]", "1.5", "a,b"},
        {"q\"uote", "-2", "line\nbreak"},
        {"", "0", ""},
    };
    {
        io::CsvWriter w(dir / "t.csv");
        for (const auto& r : rows) w.row(r);
    }
    EXPECT_EQ(io::read_csv(dir / "t.csv"), rows);
}

TEST(Csv, ReadMissingFileThrows) {
    EXPECT_ANY_THROW(io::read_csv(scratch_dir("csv_missing") / "nope.csv"));
}

TEST(Pgm, WriteReadRoundTrip) {
    const auto dir = scratch_dir("pgm");
    io::GrayImage img{5, 3, {}};
    for (std::size_t i = 0; i < 15; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 17));
    io::write_pgm(dir / "a.pgm", img);
    const io::GrayImage back = io::read_pgm(dir / "a.pgm");
    EXPECT_EQ(back.width, 5u);
    EXPECT_EQ(back.height, 3u);
    EXPECT_EQ(back.pixels, img.pixels);
    const std::string text = io::read_text(dir / "a.pgm");
    EXPECT_EQ(text.rfind("P5", 0), 0u);
}

TEST(Pgm, RejectsGarbage) {
    const auto dir = scratch_dir("pgm_bad");
    io::write_text(dir / "bad.pgm", "P2\n1 1\n255\n0\n");
    EXPECT_ANY_THROW(io::read_pgm(dir / "bad.pgm"));
}

TEST(ToGray, MinMaxNormalization) {
    const std::vector<double> v{-1.0, 0.0, 1.0, 3.0};
    const io::GrayImage g = io::to_gray(v, 2, 2);
    EXPECT_EQ(g.width, 2u);
    EXPECT_EQ(g.height, 2u);
    EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{0, 64, 128, 255}));
}

TEST(ToGray, ConstantBlockIsBlack) {
    const std::vector<double> v(12, 0.25);
    const io::GrayImage g = io::to_gray(v, 3, 4);
    EXPECT_EQ(g.pixels, std::vector<std::uint8_t>(12, 0));
}

TEST(ToGray, SizeMismatchThrows) {
    const std::vector<double> v(5, 0.0);
    EXPECT_THROW(io::to_gray(v, 2, 2), std::invalid_argument);
}

AttentionMap sample_map() {
    AttentionMap m;
    m.matrix = Tensor({2, 6}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0});
    m.query_id = "s4[1]";
    m.response_id = "s2[1]";
    return m;
}

TEST(AttentionIo, MatrixCsvStartsWithExtents) {
    const auto dir = scratch_dir("attn_csv");
    const AttentionMap m = sample_map();
    write_attention_csv(dir / "m.csv", m);
    const auto rows = io::read_csv(dir / "m.csv");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"2", "6"}));
    const Tensor back = read_matrix_csv(dir / "m.csv");
    EXPECT_EQ(back.shape(), m.matrix.shape());
    EXPECT_EQ(back.values(), m.matrix.values());
}

TEST(AttentionIo, QueryMapUsesResponseGrid) {
    const auto dir = scratch_dir("attn_query");
    const AttentionMap m = sample_map();
    write_query_map_csv(dir / "q.csv", m, 1, 2, 3);
    const Tensor back = read_matrix_csv(dir / "q.csv");
    EXPECT_EQ(back.shape(), (Shape{2, 3}));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(back[i], m.matrix.at(1, i));
    write_query_map_pgm(dir / "q.pgm", m, 1, 2, 3);
    const io::GrayImage g = io::read_pgm(dir / "q.pgm");
    EXPECT_EQ(g.width, 3u);
    EXPECT_EQ(g.height, 2u);
    EXPECT_EQ(g.pixels.front(), 0);
    EXPECT_EQ(g.pixels.back(), 255);
}

TEST(AttentionIo, RejectsBadQueries) {
    const auto dir = scratch_dir("attn_bad");
    const AttentionMap m = sample_map();
    EXPECT_THROW(write_query_map_csv(dir / "q.csv", m, 2, 2, 3), std::out_of_range);
    EXPECT_THROW(write_query_map_csv(dir / "q.csv", m, 0, 2, 2), ShapeError);
}

TEST(AttentionIo, ReadRejectsRaggedFile) {
    const auto dir = scratch_dir("attn_ragged");
    io::write_text(dir / "r.csv", "2,2\n1,2\n3\n");
    EXPECT_ANY_THROW(read_matrix_csv(dir / "r.csv"));
    io::write_text(dir / "s.csv", "3,1\n1\n2\n");
    EXPECT_ANY_THROW(read_matrix_csv(dir / "s.csv"));
}

}  // namespace
}  // namespace cnl
