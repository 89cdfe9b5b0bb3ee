// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/field.hpp"

#include <torch/nn.h>

#include <cstdint>

namespace posefree {

struct GeneratorConfig {
    int64_t latent_dim = 64;       ///< n_z
    int64_t style_dim = 64;        ///< n_w
    int64_t mapping_hidden = 64;
    int64_t plane_resolution = 32;
    int64_t plane_channels = 16;
    int64_t decoder_hidden = 32;
    int64_t feature_channels = 8; ///< C_feat, includes the three RGB channels
    int64_t plane_base_resolution = 8;

    void validate() const;
};

/// Three axis-aligned feature planes, stored as [B, 3, C, R, R] in the order xy, xz, yz.
struct TriPlane {
    torch::Tensor planes;

    int64_t batch() const { return planes.size(0); }
    int64_t channels() const { return planes.size(2); }
    int64_t resolution() const { return planes.size(3); }
};

/// Projects each point onto the xy, xz and yz planes, bilinearly interpolates
/// (grid nodes at the cube faces, align-corners) and sums the three samples.
/// Points outside [-1, 1]^3 are clamped to the boundary.
/// points: [B, K, 3] -> [B, K, C]
torch::Tensor sample_triplane(const TriPlane& tp, const torch::Tensor& points);

/// Number of coordinates outside the bounding cube; used in debug checks.
int64_t count_outside_cube(const torch::Tensor& points);

class MappingNetworkImpl : public torch::nn::Module {
public:
    explicit MappingNetworkImpl(const GeneratorConfig& cfg);
    torch::Tensor forward(const torch::Tensor& z);

    torch::nn::Linear fc1{nullptr};
    torch::nn::Linear fc2{nullptr};

private:
    int64_t latent_dim_;
};
TORCH_MODULE(MappingNetwork);

/// w -> tri-plane: a linear lift to a coarse grid followed by
/// upsample + conv stages up to the configured plane resolution.
class PlaneSynthesizerImpl : public torch::nn::Module {
public:
    explicit PlaneSynthesizerImpl(const GeneratorConfig& cfg);
    TriPlane forward(const torch::Tensor& w);

    torch::nn::Linear lift{nullptr};
    torch::nn::ModuleList stages;
    torch::nn::Conv2d out{nullptr};

private:
    int64_t base_resolution_;
    int64_t resolution_;
    int64_t channels_;
    std::vector<int64_t> stage_sizes_;
};
TORCH_MODULE(PlaneSynthesizer);

/// Small MLP from aggregated plane features to density (softplus) and features (sigmoid).
class PointDecoderImpl : public torch::nn::Module {
public:
    explicit PointDecoderImpl(const GeneratorConfig& cfg);
    PointDecode forward(const torch::Tensor& features);

    /// Pre-activation output: [..., 1 + C_feat].
    torch::Tensor raw(const torch::Tensor& features);

    torch::nn::Linear fc1{nullptr};
    torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(PointDecoder);

class TriPlaneGeneratorImpl;

/// The radiance field of one batch of latents: bound planes plus the shared decoder.
class TriPlaneField : public RadianceField {
public:
    TriPlaneField(TriPlane planes, PointDecoder decoder);

    PointDecode query(const torch::Tensor& points) const override;
    int64_t feature_channels() const override;

    const TriPlane& planes() const { return planes_; }

private:
    TriPlane planes_;
    PointDecoder decoder_;
};

/// z -> w -> tri-plane -> decoded field. The field never sees the camera pose.
class TriPlaneGeneratorImpl : public torch::nn::Module {
public:
    TriPlaneGeneratorImpl(const GeneratorConfig& cfg, std::uint64_t seed);

    torch::Tensor map_latent(const torch::Tensor& z);
    TriPlane synthesize_planes(const torch::Tensor& w);
    PointDecode decode_point(const torch::Tensor& features);
    TriPlaneField field(const torch::Tensor& z);

    const GeneratorConfig& config() const { return cfg_; }

    MappingNetwork mapping{nullptr};
    PlaneSynthesizer synthesizer{nullptr};
    PointDecoder decoder{nullptr};

private:
    GeneratorConfig cfg_;
};
TORCH_MODULE(TriPlaneGenerator);

} // namespace posefree
