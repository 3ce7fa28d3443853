// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "commands.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    std::vector<std::string> args(argv + 1, argv + argc);
    return cnl::cli::run(args, std::cout, std::cerr);
}
