// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/superres.hpp"

#include <torch/nn.h>

#include <optional>
#include <string>
#include <string_view>

namespace posefree {

enum class DiscKind {
    PoseConditioned,    ///< D(I, c) -> l
    Regression,         ///< D(I) -> l, c_hat
    Implicit,           ///< D(I) -> l, v
    RegressionImplicit, ///< D(I) -> l, c_hat, v
};

struct DiscVariant {
    DiscKind kind = DiscKind::Implicit;
    int64_t embed_dim = 24;

    bool conditioned() const { return kind == DiscKind::PoseConditioned; }
    bool has_pose_head() const { return kind == DiscKind::Regression || kind == DiscKind::RegressionImplicit; }
    bool has_embedding_head() const { return kind == DiscKind::Implicit || kind == DiscKind::RegressionImplicit; }

    void validate() const;

    /// Preset names: pose_conditioned, prnerf, contranerf, pr_contranerf.
    static DiscKind parse_kind(std::string_view name);
    static std::string kind_name(DiscKind kind);

    bool operator==(const DiscVariant&) const = default;
};

struct DiscriminatorOutput {
    torch::Tensor logit;                        ///< [B]
    std::optional<torch::Tensor> pose_estimate; ///< [B, 2] (pitch, yaw)
    std::optional<torch::Tensor> embedding;     ///< [B, m], unit norm
};

/// Guard used when normalizing a zero vector.
inline constexpr double kNormEpsilon = 1e-8;

/// raw / max(||raw||_2, eps) along the last axis.
torch::Tensor normalize_embedding(const torch::Tensor& raw);

struct DiscriminatorConfig {
    DiscVariant variant;
    int64_t image_resolution = 128;
    int64_t base_channels = 32;
    int64_t hidden = 128;
};

/// Shared convolutional trunk over the 6-channel (high, low_upsampled) stack,
/// then one linear head per output. The pose-conditioned variant adds an
/// inner product between a projection of the condition and the trunk feature,
/// plus a condition-dependent bias.
class DiscriminatorImpl : public torch::nn::Module {
public:
    DiscriminatorImpl(const DiscriminatorConfig& cfg, std::uint64_t seed);

    DiscriminatorOutput forward(const ImagePair& images, const std::optional<torch::Tensor>& condition = std::nullopt);

    /// Trunk feature h: [B, hidden].
    torch::Tensor features(const ImagePair& images);

    const DiscriminatorConfig& config() const { return cfg_; }
    const DiscVariant& variant() const { return cfg_.variant; }

    torch::nn::Sequential trunk{nullptr};
    torch::nn::Linear fc{nullptr};
    torch::nn::Linear logit_head{nullptr};
    torch::nn::Linear pose_head{nullptr};
    torch::nn::Linear embed_head{nullptr};
    torch::nn::Linear cond_proj{nullptr};
    torch::nn::Linear cond_bias{nullptr};

private:
    DiscriminatorConfig cfg_;
};
TORCH_MODULE(Discriminator);

/// Same as Discriminator::forward, with the documented contract checks
/// (condition present iff the variant is pose-conditioned).
DiscriminatorOutput discriminate(Discriminator& disc, const ImagePair& images,
                                 const std::optional<torch::Tensor>& condition_pose);

} // namespace posefree
