// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/discriminator.hpp"
#include "posefree/geometry.hpp"
#include "posefree/objectives.hpp"
#include "posefree/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace posefree {

struct ModelSection {
    std::string variant = "contranerf";
    int64_t embed_dim = 24;
    int64_t latent_dim = 64;
    int64_t style_dim = 64;
    int64_t plane_resolution = 32;
    int64_t plane_channels = 16;
    int64_t feature_channels = 8;
    int64_t decoder_hidden = 32;
    int64_t feature_resolution = 32;
    int64_t final_resolution = 128;
    int64_t samples_per_ray = 96;
    int64_t superres_hidden = 32;
    int64_t disc_channels = 32;
    int64_t disc_hidden = 128;
};

struct TrainConfig {
    int64_t batch_size = 8;
    int64_t steps = 2000;
    double lr_g = 2e-3;
    double lr_d = 2e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double ema_decay = 0.999;
    int64_t r1_every = 16;
    std::uint64_t seed = 0;
    bool flip = true;
    int64_t checkpoint_every = 0; ///< 0: only at the end
};

struct DataConfig {
    std::string source = "synthetic"; ///< synthetic | folder
    std::string path;
    std::string prior = "bedroom"; ///< bedroom | church | afhq | cub | custom
    std::string pitch;             ///< angle law, overrides the preset when set
    std::string yaw;
    double radius = 2.7;
    double fov = 0.23;
    std::string background = "black"; ///< black | white
    int64_t scenes = 50;
    int64_t views = 8;
    int64_t render_samples = 96;
    std::uint64_t seed = 0;
};

struct EvalConfig {
    std::vector<std::string> metrics{"fid", "precision_recall", "depth_fd", "embedding"};
    int64_t samples = 256;
    int64_t k = 3;
    int64_t n_poses = 128;
    int64_t n_latents = 4;
    int64_t feature_dim = 16;

    bool wants(std::string_view metric) const;
};

/// The full run description. Text form:
///
///   [model]
///   variant = contranerf
///   [loss]
///   tau = 0.25
///
/// '#' starts a comment. Every key must be known; parse errors carry
/// "<source>:<line>:" prefixes.
struct RunConfig {
    ModelSection model;
    LossWeights loss;
    TrainConfig train;
    DataConfig data;
    EvalConfig eval;

    static RunConfig parse(std::string_view text, std::string_view source = "<config>");
    static RunConfig load(const std::filesystem::path& path);

    /// "section.key=value"
    void apply_override(std::string_view assignment);
    void set(std::string_view section, std::string_view key, std::string_view value);

    /// Canonical text with every key; parse(to_text()) reproduces the config.
    std::string to_text() const;

    /// Cross-field checks. Throws ConfigError.
    void validate() const;

    DiscVariant variant() const;
    PoseDistribution pose_prior() const;
    RenderConfig render_config() const;
    PipelineConfig pipeline_config() const;
    DiscriminatorConfig discriminator_config() const;
    std::array<double, 3> background_rgb() const;
};

/// Names of the keys accepted in each section, in canonical order.
std::vector<std::string> config_keys(std::string_view section);

} // namespace posefree
