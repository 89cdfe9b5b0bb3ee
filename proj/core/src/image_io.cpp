// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/image_io.hpp"

#include "posefree/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

namespace posefree {

namespace F = torch::nn::functional;

void write_rgb_png(const torch::Tensor& image, const std::filesystem::path& path) {
    TORCH_CHECK(image.dim() == 3 && image.size(0) == 3, "expected a [3, H, W] image");
    auto bytes = ((image.detach().to(torch::kFloat64).clamp(-1.0, 1.0) + 1.0) * 127.5)
                     .round()
                     .to(torch::kUInt8)
                     .permute({1, 2, 0})
                     .flip({2}) // RGB -> BGR
                     .contiguous();
    cv::Mat mat(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr<uint8_t>());
    if (!cv::imwrite(path.string(), mat)) throw std::runtime_error("failed to write " + path.string());
}

std::optional<torch::Tensor> read_rgb_image(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (mat.empty()) return std::nullopt;
    cv::Mat rgb;
    cv::cvtColor(mat, rgb, cv::COLOR_BGR2RGB);
    auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
    return t.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

void write_depth_png(const torch::Tensor& depth, double near, double far, const std::filesystem::path& path) {
    TORCH_CHECK(depth.dim() == 2, "expected a [H, W] depth map");
    auto normalized = ((depth.detach().to(torch::kFloat64) - near) / (far - near)).clamp(0.0, 1.0);
    auto words = (normalized * 65535.0).round().to(torch::kInt32).contiguous();
    cv::Mat mat(static_cast<int>(words.size(0)), static_cast<int>(words.size(1)), CV_16UC1);
    auto acc = words.accessor<int32_t, 2>();
    for (int r = 0; r < mat.rows; ++r)
        for (int c = 0; c < mat.cols; ++c) mat.at<uint16_t>(r, c) = static_cast<uint16_t>(acc[r][c]);
    if (!cv::imwrite(path.string(), mat)) throw std::runtime_error("failed to write " + path.string());
}

torch::Tensor read_depth_png(const std::filesystem::path& path, double near, double far) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_ANYDEPTH);
    if (mat.empty() || mat.type() != CV_16UC1) throw std::runtime_error("not a 16-bit depth image: " + path.string());
    auto out = torch::empty({mat.rows, mat.cols}, torch::kFloat64);
    auto acc = out.accessor<double, 2>();
    for (int r = 0; r < mat.rows; ++r)
        for (int c = 0; c < mat.cols; ++c) acc[r][c] = near + (far - near) * mat.at<uint16_t>(r, c) / 65535.0;
    return out.to(torch::kFloat32);
}

torch::Tensor center_crop_resize(const torch::Tensor& image, int64_t resolution) {
    const int64_t h = image.size(1);
    const int64_t w = image.size(2);
    const int64_t side = std::min(h, w);
    auto crop = image.narrow(1, (h - side) / 2, side).narrow(2, (w - side) / 2, side);
    if (side == resolution) return crop.contiguous();
    auto batched = crop.unsqueeze(0);
    if (side > resolution) {
        batched = F::interpolate(batched, F::InterpolateFuncOptions()
                                              .size(std::vector<int64_t>{resolution, resolution})
                                              .mode(torch::kArea));
    } else {
        batched = F::interpolate(batched, F::InterpolateFuncOptions()
                                              .size(std::vector<int64_t>{resolution, resolution})
                                              .mode(torch::kBilinear)
                                              .align_corners(false));
    }
    return batched.squeeze(0).contiguous();
}

} // namespace posefree
