// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/renderer.hpp"

#include <torch/nn.h>

namespace posefree {

/// The two images every discriminator consumes. Both live in [-1, 1].
struct ImagePair {
    torch::Tensor high;          ///< [B, 3, Hf, Wf]
    torch::Tensor low_upsampled; ///< [B, 3, Hf, Wf], bilinear upsampling of the low-res rendering

    int64_t batch() const { return high.size(0); }
    ImagePair detached() const { return {high.detach(), low_upsampled.detach()}; }
};

/// Bilinear upsampling of a [0, 1] low-resolution image to `resolution`, rescaled to [-1, 1].
torch::Tensor upsample_low(const torch::Tensor& rgb_low, int64_t resolution);

/// Dual-image pair for real data: the low member is the image area-downsampled
/// to the feature resolution and upsampled back, matching the fake path.
ImagePair real_image_pair(const torch::Tensor& images, int64_t feature_resolution);

/// Learned lift from the rendered feature map to the final image. Two 3x3 convs
/// at feature resolution, a pixel shuffle by `factor`, added as a residual on
/// top of the upsampled low-res image; hardtanh keeps the result in [-1, 1].
/// The residual conv starts at zero, so a fresh module reproduces the low-res image.
class SuperResolutionImpl : public torch::nn::Module {
public:
    SuperResolutionImpl(int64_t feature_channels, int64_t hidden, int64_t factor, std::uint64_t seed);

    ImagePair forward(const RenderOutput& rendered);

    int64_t factor() const { return factor_; }

    torch::nn::Conv2d conv1{nullptr};
    torch::nn::Conv2d conv2{nullptr};

private:
    int64_t factor_;
};
TORCH_MODULE(SuperResolution);

/// Throws ConfigError unless final_resolution is an integer multiple of the feature map size.
int64_t upsampling_factor(int64_t feature_resolution, int64_t final_resolution);

/// Checked entry point: verifies the module's factor matches the requested output size.
ImagePair superresolve(SuperResolution& sr, const RenderOutput& rendered, int64_t final_resolution);

} // namespace posefree
