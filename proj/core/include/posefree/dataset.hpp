// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/field.hpp"
#include "posefree/geometry.hpp"
#include "posefree/renderer.hpp"

#include <torch/types.h>

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

namespace posefree {

/// Soft ellipsoid: full density inside, Gaussian falloff of relative width
/// `kFalloffWidth` outside the surface, cut to zero beyond three widths.
struct Primitive {
    std::array<double, 3> center{0.0, 0.0, 0.0};
    std::array<double, 3> radii{0.5, 0.5, 0.5};
    std::array<double, 3> rgb{1.0, 1.0, 1.0};
};

inline constexpr double kSceneDensity = 100.0;
inline constexpr double kFalloffWidth = 0.05;

struct SyntheticScene {
    std::vector<Primitive> primitives;
    std::array<double, 3> background{0.0, 0.0, 0.0};

    /// 1-5 random primitives that stay inside the unit cube.
    static SyntheticScene random(Rng& rng, std::array<double, 3> background);
};

/// Closed-form density at [..., 3] points for one scene: [...].
torch::Tensor scene_density(const SyntheticScene& scene, const torch::Tensor& points);

/// Analytic field of one scene per batch row (a single scene serves every row).
/// Features are the density-weighted primitive colors (three channels).
class SceneField : public RadianceField {
public:
    explicit SceneField(std::vector<SyntheticScene> scenes);

    PointDecode query(const torch::Tensor& points) const override;
    int64_t feature_channels() const override { return 3; }

private:
    std::vector<SyntheticScene> scenes_;
};

/// One image with optional ground truth. The gt fields exist only for
/// synthetic data and only evaluation code reads them.
struct DatasetRecord {
    torch::Tensor image; ///< [3, H, W] in [-1, 1]
    std::optional<CameraPose> gt_pose;
    std::optional<torch::Tensor> gt_depth; ///< [H, W]
};

struct SyntheticDatasetConfig {
    int64_t n_scenes = 50;
    int64_t views_per_scene = 8;
    PoseDistribution prior = PoseDistribution::preset("bedroom");
    std::uint64_t seed = 0;
    int64_t resolution = 128;
    int64_t samples_per_ray = 96;
    std::array<double, 3> background{0.0, 0.0, 0.0};

    double near() const { return default_near(prior.radius); }
    double far() const { return default_far(prior.radius); }
    RenderConfig render_config() const;
};

struct Dataset {
    std::vector<DatasetRecord> records;
    /// Set for synthetic data; the depth range used for normalization.
    std::optional<std::pair<double, double>> depth_range;

    size_t size() const { return records.size(); }
    bool has_ground_truth() const;
};

/// Emission-absorption rendering of random scenes (same compositing as the
/// volume renderer, bin-midpoint samples), deterministic per seed.
Dataset generate_synthetic_dataset(const SyntheticDatasetConfig& cfg);

/// Renders explicit scenes from explicit poses (one record per pose, all views of `scene`).
std::vector<DatasetRecord> render_scene_views(const SyntheticScene& scene, std::span<const CameraPose> poses,
                                              const SyntheticDatasetConfig& cfg);

/// images/*.png, depth/*.png (16-bit over [near, far]), poses.csv, manifest.json.
void save_synthetic_dataset(const Dataset& ds, const SyntheticDatasetConfig& cfg, const std::filesystem::path& dir);
/// Reads a directory written by save_synthetic_dataset, ground truth included.
Dataset load_synthetic_dataset(const std::filesystem::path& dir);
bool is_synthetic_dataset_dir(const std::filesystem::path& dir);

/// Decodable images of a folder in filename order, center-cropped and resized.
/// Unreadable files are skipped with a warning on stderr; an empty result throws.
/// With flip_augment each record is mirrored with probability 0.5, drawn from Rng(seed).
Dataset load_image_folder(const std::filesystem::path& dir, int64_t resolution, bool flip_augment = false,
                          std::uint64_t seed = 0);

/// Mirror along the width axis.
torch::Tensor horizontal_flip(const torch::Tensor& image);

/// Real images for training, stripped of every ground-truth field.
class TrainingImages {
public:
    explicit TrainingImages(const Dataset& ds);
    explicit TrainingImages(torch::Tensor images);

    const torch::Tensor& images() const { return images_; }
    int64_t size() const { return images_.size(0); }
    int64_t resolution() const { return images_.size(-1); }

    /// Uniform draw with replacement; each draw flipped with probability 0.5 when `flip`.
    torch::Tensor sample(int64_t batch, Rng& rng, bool flip) const;

private:
    torch::Tensor images_; ///< [N, 3, H, W]
};

} // namespace posefree
