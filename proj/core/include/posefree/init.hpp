// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ATen/core/Generator.h>
#include <torch/nn/module.h>

#include <cstdint>
#include <string_view>

namespace posefree {

/// Re-initializes every parameter of `module` from a private generator:
/// weights ~ U(-sqrt(3 / fan_in), sqrt(3 / fan_in)), biases zero.
/// Initialization therefore never touches the global torch RNG.
void init_parameters(torch::nn::Module& module, std::uint64_t seed, std::string_view tag);

} // namespace posefree
