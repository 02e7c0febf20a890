// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include "trident/cli.hpp"

int main(int argc, char** argv) {
    return trident::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
