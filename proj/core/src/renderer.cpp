// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/renderer.hpp"

#include "posefree/errors.hpp"

#include <torch/torch.h>

#include <string>

namespace posefree {

void RenderConfig::validate() const {
    if (feature_resolution < 1) throw ConfigError("feature_resolution must be >= 1");
    if (samples_per_ray < 2) throw ConfigError("samples_per_ray must be >= 2");
    if (!(near > 0.0 && near < far)) throw ConfigError("render bounds need 0 < near < far");
}

CompositeResult composite(const torch::Tensor& densities, const torch::Tensor& values, const torch::Tensor& t_vals,
                          const torch::Tensor& background, double last_delta, double empty_depth) {
    TORCH_CHECK(densities.sizes() == t_vals.sizes(), "densities and t_vals must share shape");
    TORCH_CHECK(values.dim() == densities.dim() + 1, "values must carry a trailing channel axis");
    const int64_t s = t_vals.size(-1);
    if (s < 1) throw ContractViolation("composite: need at least one sample");

    torch::Tensor deltas;
    if (s > 1) {
        auto diffs = t_vals.narrow(-1, 1, s - 1) - t_vals.narrow(-1, 0, s - 1);
        if (!(diffs > 0).all().item<bool>()) {
            throw ContractViolation("composite: t_vals must be strictly increasing");
        }
        deltas = torch::cat({diffs, torch::full_like(t_vals.narrow(-1, 0, 1), last_delta)}, -1);
    } else {
        deltas = torch::full_like(t_vals, last_delta);
    }

    // Optical depth form: T_i = exp(-sum_{j<i} sigma_j delta_j), well defined for sigma = inf.
    const auto tau = densities * deltas;
    const auto cum = torch::cumsum(tau, -1);
    const auto exclusive = torch::cat({torch::zeros_like(tau.narrow(-1, 0, 1)), cum.narrow(-1, 0, s - 1)}, -1);
    const auto transmittance = torch::exp(-exclusive);
    const auto alpha = 1.0 - torch::exp(-tau);
    const auto weights = transmittance * alpha;

    CompositeResult out;
    out.weights = weights;
    out.opacity = 1.0 - torch::exp(-cum.select(-1, s - 1));
    out.value = (weights.unsqueeze(-1) * values).sum(-2) + (1.0 - out.opacity).unsqueeze(-1) * background;
    const auto weighted_t = (weights * t_vals).sum(-1);
    out.depth = torch::where(out.opacity > kDepthEpsilon, weighted_t / out.opacity.clamp_min(kDepthEpsilon),
                             torch::full_like(weighted_t, empty_depth));
    return out;
}

torch::Tensor sample_distances(const RenderConfig& cfg, int64_t batch, int64_t rays, torch::Dtype dtype,
                               at::Generator* jitter) {
    const int64_t s = cfg.samples_per_ray;
    const auto opts = torch::TensorOptions().dtype(dtype);
    auto offsets = cfg.stratified ? torch::rand({batch, rays, s}, jitter ? std::optional<at::Generator>(*jitter)
                                                                          : std::optional<at::Generator>{},
                                                opts)
                                  : torch::full({batch, rays, s}, 0.5, opts);
    auto bins = torch::arange(s, opts).view({1, 1, s});
    return cfg.near + (bins + offsets) * cfg.bin_width();
}

RenderOutput render(const RadianceField& field, std::span<const CameraPose> poses, const RenderConfig& cfg,
                    at::Generator* jitter, torch::Dtype dtype) {
    cfg.validate();
    const int64_t b = static_cast<int64_t>(poses.size());
    if (b == 0) throw ContractViolation("render: need at least one pose");
    const int64_t res = cfg.feature_resolution;
    const int64_t rays = res * res;
    const int64_t s = cfg.samples_per_ray;

    std::vector<torch::Tensor> origins;
    std::vector<torch::Tensor> directions;
    origins.reserve(poses.size());
    directions.reserve(poses.size());
    for (const auto& pose : poses) {
        auto r = generate_rays(pose, res, cfg.near, cfg.far, dtype);
        origins.push_back(r.origins.view({rays, 3}));
        directions.push_back(r.directions.view({rays, 3}));
    }
    const auto o = torch::stack(origins);    // [B, R, 3]
    const auto d = torch::stack(directions); // [B, R, 3]
    const auto t = sample_distances(cfg, b, rays, dtype, jitter);

    const auto points = (o.unsqueeze(2) + d.unsqueeze(2) * t.unsqueeze(-1)).view({b, rays * s, 3});
    const auto decoded = field.query(points);
    const int64_t c = decoded.features.size(-1);
    const auto density = decoded.density.view({b, rays, s});
    const auto values = decoded.features.view({b, rays, s, c});

    auto bg = torch::zeros({c}, torch::TensorOptions().dtype(dtype));
    for (int64_t i = 0; i < std::min<int64_t>(3, c); ++i) bg[i] = cfg.background[static_cast<size_t>(i)];

    const auto comp = composite(density, values, t, bg, cfg.bin_width(), cfg.far);

    if (cfg.check_invariants) {
        torch::NoGradGuard guard;
        const auto wsum = comp.weights.sum(-1);
        const bool ok = (comp.weights >= 0).all().item<bool>() &&
                        ((wsum - comp.opacity).abs() <= 1e-5).all().item<bool>() &&
                        (comp.opacity <= 1.0).all().item<bool>() && (comp.opacity >= 0.0).all().item<bool>();
        if (!ok) throw ContractViolation("render: compositing weights violate 0 <= w, sum(w) == opacity <= 1");
    }

    RenderOutput out;
    out.feature_map = comp.value.view({b, res, res, c}).permute({0, 3, 1, 2}).contiguous();
    out.rgb_low = out.feature_map.narrow(1, 0, 3);
    out.depth = comp.depth.view({b, res, res});
    out.opacity = comp.opacity.view({b, res, res});
    return out;
}

} // namespace posefree
