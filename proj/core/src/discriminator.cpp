// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/discriminator.hpp"

#include "posefree/errors.hpp"
#include "posefree/init.hpp"

#include <torch/torch.h>

namespace posefree {

namespace F = torch::nn::functional;

void DiscVariant::validate() const {
    if (has_embedding_head() && embed_dim < 2) {
        throw ConfigError("embedding dimension must be >= 2, got " + std::to_string(embed_dim));
    }
}

DiscKind DiscVariant::parse_kind(std::string_view name) {
    if (name == "pose_conditioned") return DiscKind::PoseConditioned;
    if (name == "prnerf") return DiscKind::Regression;
    if (name == "contranerf") return DiscKind::Implicit;
    if (name == "pr_contranerf") return DiscKind::RegressionImplicit;
    throw ConfigError("unknown variant '" + std::string(name) +
                      "' (expected pose_conditioned, prnerf, contranerf or pr_contranerf)");
}

std::string DiscVariant::kind_name(DiscKind kind) {
    switch (kind) {
    case DiscKind::PoseConditioned: return "pose_conditioned";
    case DiscKind::Regression: return "prnerf";
    case DiscKind::Implicit: return "contranerf";
    case DiscKind::RegressionImplicit: return "pr_contranerf";
    }
    return "unknown";
}

torch::Tensor normalize_embedding(const torch::Tensor& raw) {
    return raw / raw.norm(2, -1, /*keepdim=*/true).clamp_min(kNormEpsilon);
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.variant.validate();
    const int64_t c = cfg.base_channels;
    const std::array<int64_t, 5> widths{6, c, 2 * c, 4 * c, 4 * c};
    trunk = torch::nn::Sequential();
    int64_t res = cfg.image_resolution;
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        trunk->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(widths[i], widths[i + 1], 3).stride(2).padding(1)));
        trunk->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
        res = (res + 1) / 2;
    }
    trunk = register_module("trunk", trunk);
    fc = register_module("fc", torch::nn::Linear(widths.back() * res * res, cfg.hidden));
    logit_head = register_module("logit_head", torch::nn::Linear(cfg.hidden, 1));

    // Each part draws from its own stream so variants that share a part
    // start from bitwise-identical weights.
    init_parameters(*trunk, seed, "disc.trunk");
    init_parameters(*fc, seed, "disc.fc");
    init_parameters(*logit_head, seed, "disc.logit");
    if (cfg_.variant.has_pose_head()) {
        pose_head = register_module("pose_head", torch::nn::Linear(cfg.hidden, 2));
        init_parameters(*pose_head, seed, "disc.pose");
    }
    if (cfg_.variant.has_embedding_head()) {
        embed_head = register_module("embed_head", torch::nn::Linear(cfg.hidden, cfg_.variant.embed_dim));
        init_parameters(*embed_head, seed, "disc.embed");
    }
    if (cfg_.variant.conditioned()) {
        cond_proj = register_module("cond_proj", torch::nn::Linear(2, cfg.hidden));
        cond_bias = register_module("cond_bias", torch::nn::Linear(2, 1));
        init_parameters(*cond_proj, seed, "disc.cond_proj");
        init_parameters(*cond_bias, seed, "disc.cond_bias");
    }
}

torch::Tensor DiscriminatorImpl::features(const ImagePair& images) {
    auto x = torch::cat({images.high, images.low_upsampled}, 1);
    x = trunk->forward(x).flatten(1);
    return F::leaky_relu(fc(x), F::LeakyReLUFuncOptions().negative_slope(0.2));
}

DiscriminatorOutput DiscriminatorImpl::forward(const ImagePair& images, const std::optional<torch::Tensor>& condition) {
    const auto h = features(images);
    DiscriminatorOutput out;
    auto logit = logit_head(h).squeeze(-1);
    if (cfg_.variant.conditioned()) {
        TORCH_CHECK(condition.has_value(), "pose-conditioned discriminator needs a condition");
        const auto& c = *condition;
        logit = logit + (cond_proj(c) * h).sum(-1) + cond_bias(c).squeeze(-1);
    }
    out.logit = logit;
    if (cfg_.variant.has_pose_head()) out.pose_estimate = pose_head(h);
    if (cfg_.variant.has_embedding_head()) out.embedding = normalize_embedding(embed_head(h));
    return out;
}

DiscriminatorOutput discriminate(Discriminator& disc, const ImagePair& images,
                                 const std::optional<torch::Tensor>& condition_pose) {
    const bool conditioned = disc->variant().conditioned();
    if (conditioned && !condition_pose) {
        throw ContractViolation("discriminate: pose-conditioned variant requires a condition pose");
    }
    if (!conditioned && condition_pose) {
        throw ContractViolation("discriminate: only the pose-conditioned variant accepts a condition pose");
    }
    if (condition_pose && (condition_pose->dim() != 2 || condition_pose->size(1) != 2 ||
                           condition_pose->size(0) != images.batch())) {
        throw ContractViolation("discriminate: condition pose must be [B, 2]");
    }
    const int64_t expected = disc->config().image_resolution;
    if (images.high.size(-1) != expected || images.low_upsampled.sizes() != images.high.sizes()) {
        throw ContractViolation("discriminate: image pair must be two [B, 3, " + std::to_string(expected) + ", " +
                                std::to_string(expected) + "] tensors");
    }
    return disc->forward(images, condition_pose);
}

} // namespace posefree
