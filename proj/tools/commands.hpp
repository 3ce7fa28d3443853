// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// `cnl` command-line tool: analyze, gradcheck, train, attn-export.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cnl::cli {

enum ExitCode : int {
    kOk = 0,
    kValidationError = 1,
    kVerificationFailure = 2,
    kDiverged = 3,
};

/// Resolved settings of one invocation; serialized into manifest.json.
struct RunConfig {
    std::string command;
    std::string spec;    // resnet50 | resnet101 | toy | path to an architecture JSON file
    std::string preset;  // baseline | nl5 | cnl5; empty keeps a JSON file's own insertions
    std::size_t input = 0;    // 0: the architecture's default
    std::size_t classes = 0;  // 0: the architecture's default
    std::uint64_t seed = 0;
    std::string out = "cnl_out";
    std::string convention = "mac1";
    std::string mode = "dot-mean";
    std::size_t ce = 0;

    // toy backbone
    std::vector<std::size_t> channels{4, 8, 16, 32};
    std::vector<std::size_t> blocks;

    // gradcheck
    std::size_t rounds = 3;
    double threshold = 1e-4;
    std::string corrupt;

    // train
    std::size_t epochs = 12;
    std::size_t batch = 32;
    double lr = 0.05;
    double decay = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t train_count = 2000;
    std::size_t test_count = 500;
    double noise = 0.1;
    bool dump_data = false;

    // attn-export
    std::string checkpoint;
    std::string image = "zeros";  // zeros | sample:<index> | path to a PGM file
    std::vector<std::size_t> query;
};

/// Runs one invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cnl::cli
