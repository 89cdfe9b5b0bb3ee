// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/rng.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace posefree {

at::Generator make_torch_generator(std::uint64_t seed) {
    return at::make_generator<at::CPUGeneratorImpl>(seed);
}

at::Generator Rng::fork_torch() {
    return make_torch_generator(next_u64());
}

} // namespace posefree
