// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/superres.hpp"

#include "posefree/errors.hpp"
#include "posefree/init.hpp"

#include <torch/torch.h>

namespace posefree {

namespace F = torch::nn::functional;

torch::Tensor upsample_low(const torch::Tensor& rgb_low, int64_t resolution) {
    auto up = rgb_low;
    if (rgb_low.size(-1) != resolution || rgb_low.size(-2) != resolution) {
        up = F::interpolate(rgb_low, F::InterpolateFuncOptions()
                                         .size(std::vector<int64_t>{resolution, resolution})
                                         .mode(torch::kBilinear)
                                         .align_corners(false));
    }
    return up * 2.0 - 1.0;
}

ImagePair real_image_pair(const torch::Tensor& images, int64_t feature_resolution) {
    TORCH_CHECK(images.dim() == 4 && images.size(1) == 3, "real images must be [B, 3, H, W]");
    const int64_t res = images.size(-1);
    auto low = images;
    if (res != feature_resolution) {
        low = F::adaptive_avg_pool2d(images, F::AdaptiveAvgPool2dFuncOptions({feature_resolution, feature_resolution}));
    }
    // low is in [-1, 1]; upsample_low expects [0, 1]
    return ImagePair{images, upsample_low((low + 1.0) * 0.5, res)};
}

int64_t upsampling_factor(int64_t feature_resolution, int64_t final_resolution) {
    if (feature_resolution < 1 || final_resolution < feature_resolution || final_resolution % feature_resolution != 0) {
        throw ConfigError("final resolution " + std::to_string(final_resolution) +
                          " must be an integer multiple of the feature resolution " +
                          std::to_string(feature_resolution));
    }
    return final_resolution / feature_resolution;
}

SuperResolutionImpl::SuperResolutionImpl(int64_t feature_channels, int64_t hidden, int64_t factor, std::uint64_t seed)
    : factor_(factor) {
    if (factor < 1) throw ConfigError("super-resolution factor must be >= 1");
    conv1 = register_module("conv1",
                            torch::nn::Conv2d(torch::nn::Conv2dOptions(feature_channels, hidden, 3).padding(1)));
    conv2 = register_module("conv2",
                            torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, 3 * factor * factor, 3).padding(1)));
    init_parameters(*conv1, seed, "superres.conv1");
    torch::NoGradGuard no_grad;
    conv2->weight.zero_();
    conv2->bias.zero_();
}

ImagePair SuperResolutionImpl::forward(const RenderOutput& rendered) {
    const int64_t res = rendered.feature_map.size(-1) * factor_;
    auto h = F::leaky_relu(conv1(rendered.feature_map * 2.0 - 1.0), F::LeakyReLUFuncOptions().negative_slope(0.2));
    auto residual = F::pixel_shuffle(conv2(h), factor_);
    auto low_up = upsample_low(rendered.rgb_low, res);
    return ImagePair{F::hardtanh(low_up + residual), low_up};
}

ImagePair superresolve(SuperResolution& sr, const RenderOutput& rendered, int64_t final_resolution) {
    const int64_t factor = upsampling_factor(rendered.feature_map.size(-1), final_resolution);
    if (factor != sr->factor()) {
        throw ConfigError("super-resolution module was built for factor " + std::to_string(sr->factor()) +
                          ", requested " + std::to_string(factor));
    }
    return sr->forward(rendered);
}

} // namespace posefree
