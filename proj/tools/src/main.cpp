// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree_tools/commands.hpp"

int main(int argc, char** argv) {
    return posefree::cli::run(argc, argv);
}
