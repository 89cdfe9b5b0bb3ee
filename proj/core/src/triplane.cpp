// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/triplane.hpp"

#include "posefree/errors.hpp"
#include "posefree/init.hpp"

#include <torch/torch.h>

namespace posefree {

namespace F = torch::nn::functional;

void GeneratorConfig::validate() const {
    if (latent_dim < 1 || style_dim < 1 || mapping_hidden < 1) throw ConfigError("latent/style dims must be >= 1");
    if (plane_resolution < 2) throw ConfigError("plane resolution must be >= 2");
    if (plane_channels < 1) throw ConfigError("plane channels must be >= 1");
    if (decoder_hidden < 1) throw ConfigError("decoder hidden width must be >= 1");
    if (feature_channels < 3) throw ConfigError("feature channels must be >= 3 (RGB comes first)");
    if (plane_base_resolution < 1) throw ConfigError("plane base resolution must be >= 1");
}

torch::Tensor sample_triplane(const TriPlane& tp, const torch::Tensor& points) {
    TORCH_CHECK(tp.planes.dim() == 5 && tp.planes.size(1) == 3, "tri-plane must be [B, 3, C, R, R]");
    TORCH_CHECK(points.dim() == 3 && points.size(2) == 3, "points must be [B, K, 3]");
    TORCH_CHECK(points.size(0) == tp.planes.size(0), "points and planes disagree on batch size");

    const auto p = points.clamp(-1.0, 1.0);
    const auto x = p.select(2, 0);
    const auto y = p.select(2, 1);
    const auto z = p.select(2, 2);

    const auto opts = F::GridSampleFuncOptions()
                          .mode(torch::kBilinear)
                          .padding_mode(torch::kBorder)
                          .align_corners(true);
    // grid[..., 0] indexes width, grid[..., 1] indexes height.
    auto sample = [&](int64_t plane, const torch::Tensor& u, const torch::Tensor& v) {
        auto grid = torch::stack({u, v}, -1).unsqueeze(1); // [B, 1, K, 2]
        return F::grid_sample(tp.planes.select(1, plane), grid, opts).squeeze(2); // [B, C, K]
    };
    auto summed = sample(0, x, y) + sample(1, x, z) + sample(2, y, z);
    return summed.permute({0, 2, 1});
}

int64_t count_outside_cube(const torch::Tensor& points) {
    return (points.abs() > 1.0).any(-1).sum().item<int64_t>();
}

MappingNetworkImpl::MappingNetworkImpl(const GeneratorConfig& cfg) : latent_dim_(cfg.latent_dim) {
    fc1 = register_module("fc1", torch::nn::Linear(cfg.latent_dim, cfg.mapping_hidden));
    fc2 = register_module("fc2", torch::nn::Linear(cfg.mapping_hidden, cfg.style_dim));
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z) {
    if (z.dim() != 2 || z.size(1) != latent_dim_) {
        throw ConfigError("map_latent: expected latents of shape [B, " + std::to_string(latent_dim_) + "]");
    }
    return fc2(F::leaky_relu(fc1(z), F::LeakyReLUFuncOptions().negative_slope(0.2)));
}

PlaneSynthesizerImpl::PlaneSynthesizerImpl(const GeneratorConfig& cfg)
    : base_resolution_(std::min(cfg.plane_base_resolution, cfg.plane_resolution)),
      resolution_(cfg.plane_resolution),
      channels_(cfg.plane_channels) {
    const int64_t width = 3 * channels_;
    lift = register_module("lift", torch::nn::Linear(cfg.style_dim, width * base_resolution_ * base_resolution_));
    stages = register_module("stages", torch::nn::ModuleList());
    for (int64_t res = base_resolution_; res < resolution_;) {
        res = std::min(res * 2, resolution_);
        stage_sizes_.push_back(res);
        stages->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(width, width, 3).padding(1).groups(3)));
    }
    out = register_module("out", torch::nn::Conv2d(torch::nn::Conv2dOptions(width, width, 3).padding(1).groups(3)));
}

TriPlane PlaneSynthesizerImpl::forward(const torch::Tensor& w) {
    const auto lrelu = F::LeakyReLUFuncOptions().negative_slope(0.2);
    const int64_t b = w.size(0);
    auto x = lift(w).view({b, 3 * channels_, base_resolution_, base_resolution_});
    x = F::leaky_relu(x, lrelu);
    for (size_t i = 0; i < stage_sizes_.size(); ++i) {
        const int64_t s = stage_sizes_[i];
        x = F::interpolate(x, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{s, s})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
        x = F::leaky_relu(stages[i]->as<torch::nn::Conv2d>()->forward(x), lrelu);
    }
    x = out(x);
    return TriPlane{x.view({b, 3, channels_, resolution_, resolution_})};
}

PointDecoderImpl::PointDecoderImpl(const GeneratorConfig& cfg) {
    fc1 = register_module("fc1", torch::nn::Linear(cfg.plane_channels, cfg.decoder_hidden));
    fc2 = register_module("fc2", torch::nn::Linear(cfg.decoder_hidden, 1 + cfg.feature_channels));
}

torch::Tensor PointDecoderImpl::raw(const torch::Tensor& features) {
    return fc2(F::softplus(fc1(features)));
}

PointDecode PointDecoderImpl::forward(const torch::Tensor& features) {
    auto r = raw(features);
    PointDecode out;
    out.density = F::softplus(r.select(-1, 0));
    out.features = torch::sigmoid(r.narrow(-1, 1, r.size(-1) - 1));
    return out;
}

TriPlaneField::TriPlaneField(TriPlane planes, PointDecoder decoder)
    : planes_(std::move(planes)), decoder_(std::move(decoder)) {}

PointDecode TriPlaneField::query(const torch::Tensor& points) const {
    auto decoder = decoder_;
    return decoder->forward(sample_triplane(planes_, points));
}

int64_t TriPlaneField::feature_channels() const {
    return decoder_->fc2->options.out_features() - 1;
}

TriPlaneGeneratorImpl::TriPlaneGeneratorImpl(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    mapping = register_module("mapping", MappingNetwork(cfg_));
    synthesizer = register_module("synthesizer", PlaneSynthesizer(cfg_));
    decoder = register_module("decoder", PointDecoder(cfg_));
    init_parameters(*mapping, seed, "generator.mapping");
    init_parameters(*synthesizer, seed, "generator.synthesizer");
    init_parameters(*decoder, seed, "generator.decoder");
}

torch::Tensor TriPlaneGeneratorImpl::map_latent(const torch::Tensor& z) {
    return mapping->forward(z);
}

TriPlane TriPlaneGeneratorImpl::synthesize_planes(const torch::Tensor& w) {
    if (w.dim() != 2 || w.size(1) != cfg_.style_dim) {
        throw ConfigError("synthesize_planes: style vector has the wrong dimension");
    }
    return synthesizer->forward(w);
}

PointDecode TriPlaneGeneratorImpl::decode_point(const torch::Tensor& features) {
    return decoder->forward(features);
}

TriPlaneField TriPlaneGeneratorImpl::field(const torch::Tensor& z) {
    return TriPlaneField(synthesize_planes(map_latent(z)), decoder);
}

} // namespace posefree
