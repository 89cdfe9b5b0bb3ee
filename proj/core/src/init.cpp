// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/init.hpp"

#include "posefree/rng.hpp"

#include <torch/torch.h>

#include <cmath>

namespace posefree {

void init_parameters(torch::nn::Module& module, std::uint64_t seed, std::string_view tag) {
    torch::NoGradGuard no_grad;
    auto gen = make_torch_generator(derive_seed(seed, tag));
    for (auto& item : module.named_parameters(/*recurse=*/true)) {
        auto& p = item.value();
        const std::string& name = item.key();
        const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
        if (is_bias || p.dim() < 2) {
            p.zero_();
            continue;
        }
        const double fan_in = static_cast<double>(p.numel() / p.size(0));
        const double bound = std::sqrt(3.0 / fan_in);
        p.uniform_(-bound, bound, gen);
    }
}

} // namespace posefree
