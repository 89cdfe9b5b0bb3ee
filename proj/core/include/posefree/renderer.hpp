// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/field.hpp"
#include "posefree/geometry.hpp"

#include <ATen/core/Generator.h>
#include <torch/types.h>

#include <array>
#include <optional>
#include <span>

namespace posefree {

struct RenderConfig {
    int64_t feature_resolution = 32;
    int64_t samples_per_ray = 96;
    double near = default_near(2.7);
    double far = default_far(2.7);
    bool stratified = true;
    std::array<double, 3> background{0.0, 0.0, 0.0};
    /// Assert per-pixel weight invariants on every render (slow; tests only).
    bool check_invariants = false;

    void validate() const;
    double bin_width() const { return (far - near) / static_cast<double>(samples_per_ray); }
};

struct RenderOutput {
    torch::Tensor feature_map; ///< [B, C, H, W]
    torch::Tensor rgb_low;     ///< [B, 3, H, W], in [0, 1]
    torch::Tensor depth;       ///< [B, H, W], distance along the ray
    torch::Tensor opacity;     ///< [B, H, W], in [0, 1]
};

struct CompositeResult {
    torch::Tensor value;   ///< [..., C]
    torch::Tensor depth;   ///< [...]
    torch::Tensor opacity; ///< [...]
    torch::Tensor weights; ///< [..., S] = T_i * alpha_i
};

/// Normalizer guard for depth; pixels whose opacity does not exceed it report `empty_depth`.
inline constexpr double kDepthEpsilon = 1e-6;

/// Emission-absorption compositing along the last sample axis.
///   alpha_i = 1 - exp(-sigma_i delta_i),  T_i = prod_{j<i} (1 - alpha_j)
///   value   = sum_i T_i alpha_i v_i + (1 - opacity) * background
///   depth   = sum_i T_i alpha_i t_i / opacity   (empty_depth when opacity <= eps)
/// delta_i = t_{i+1} - t_i and `last_delta` for the final sample.
/// densities: [..., S], values: [..., S, C], t_vals: [..., S], background: [C].
/// Throws ContractViolation if t_vals is not strictly increasing.
CompositeResult composite(const torch::Tensor& densities, const torch::Tensor& values, const torch::Tensor& t_vals,
                          const torch::Tensor& background, double last_delta, double empty_depth);

/// Sample distances for a batch of rays: [B, R, S]. Uniform bins over [near, far];
/// the sample sits at the bin midpoint, or at a per-sample uniform offset when stratified.
torch::Tensor sample_distances(const RenderConfig& cfg, int64_t batch, int64_t rays, torch::Dtype dtype,
                               at::Generator* jitter);

/// Ray-marches `field` once per pose (batch row b uses poses[b]).
RenderOutput render(const RadianceField& field, std::span<const CameraPose> poses, const RenderConfig& cfg,
                    at::Generator* jitter = nullptr, torch::Dtype dtype = torch::kFloat32);

} // namespace posefree
