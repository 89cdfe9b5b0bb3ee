// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/types.h>

#include <filesystem>
#include <optional>

namespace posefree {

/// [3, H, W] in [-1, 1] -> 8-bit RGB PNG.
void write_rgb_png(const torch::Tensor& image, const std::filesystem::path& path);

/// 8-bit RGB file -> [3, H, W] float in [-1, 1]; nullopt when the file cannot be decoded.
std::optional<torch::Tensor> read_rgb_image(const std::filesystem::path& path);

/// Depth [H, W] mapped linearly from [near, far] to 16-bit grayscale.
void write_depth_png(const torch::Tensor& depth, double near, double far, const std::filesystem::path& path);
torch::Tensor read_depth_png(const std::filesystem::path& path, double near, double far);

/// Center crop to a square, then area/bilinear resize. [3, H, W] -> [3, res, res].
torch::Tensor center_crop_resize(const torch::Tensor& image, int64_t resolution);

} // namespace posefree
