// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/dataset.hpp"
#include "posefree/discriminator.hpp"
#include "posefree/pipeline.hpp"

#include <Eigen/Dense>
#include <torch/nn.h>

#include <optional>
#include <string>
#include <vector>

namespace posefree {

/// n x d feature matrix tagged with the extractor that produced it.
struct FeatureSet {
    Eigen::MatrixXd features;
    std::string extractor_id;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
};

/// Fixed-seed random convolutional projection used as the feature space for
/// Fréchet distances. Two strided 3x3 convs with leaky activations, global
/// mean and standard-deviation pooling, then a linear map to `feature_dim`.
/// Deterministic in (in_channels, feature_dim, seed) and resolution-agnostic.
class RandomProjectionExtractor {
public:
    RandomProjectionExtractor(int64_t in_channels, int64_t feature_dim, std::uint64_t seed = kDefaultSeed);

    /// images: [N, C, H, W].
    FeatureSet extract(const torch::Tensor& images) const;
    const std::string& id() const { return id_; }

    static constexpr std::uint64_t kDefaultSeed = 0x5eed'f00d;

private:
    int64_t in_channels_;
    std::string id_;
    torch::nn::Sequential net_{nullptr};
    torch::nn::Linear head_{nullptr};
};

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the square-root
/// trace taken from the symmetric form S_a^{1/2} S_b S_a^{1/2}. Eigenvalues
/// down to -1e-6 are treated as zero; below that a warning is printed. The
/// result is clamped at zero. Throws ConfigError on extractor or dimension
/// mismatch, too few samples, or non-finite features.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

/// k-NN manifold membership: a sample is inside a set's manifold when it lies
/// within the k-th-neighbour radius (self excluded) of at least one member.
PrecisionRecall precision_recall(const FeatureSet& real, const FeatureSet& fake, int64_t k = 3);

/// Fréchet distance between depth sets [N, H, W] after mapping [near, far] to [0, 1].
double depth_quality(const torch::Tensor& generated, const torch::Tensor& reference, double near, double far,
                     const RandomProjectionExtractor& extractor);

struct EmbeddingDiagnostics {
    double same_pose_sim = 0.0;
    double diff_pose_sim = 0.0;
    double gap = 0.0;
    double probe_r2 = 0.0;
};

/// embeddings: [P, L, m] for P poses and L latents per pose; targets: [P, 2]
/// (pitch, yaw). The linear probe (with bias) is fitted on the first half of
/// the poses and scored on the rest; R^2 pools both targets.
EmbeddingDiagnostics diagnostics_from_embeddings(const torch::Tensor& embeddings, const torch::Tensor& targets);

/// Renders a P x L grid of (pose, latent) images with `gen` and embeds them with `disc`.
EmbeddingDiagnostics embedding_diagnostics(GeneratorPipeline& gen, Discriminator& disc, const PoseDistribution& prior,
                                           int64_t n_poses, int64_t n_latents, std::uint64_t seed);

/// Yaw offsets in degrees, evenly spaced with exact endpoints; steps == 1 gives {lo}.
std::vector<double> sweep_offsets(double lo_deg, double hi_deg, int64_t steps);

struct SweepStrip {
    torch::Tensor rgb;   ///< [3, H, W * steps], in [-1, 1]
    torch::Tensor depth; ///< [Hd, Wd * steps]
    std::vector<double> yaw_offsets_deg;
    std::vector<double> yaws; ///< absolute yaw in radians
};

/// Low-resolution sweep of an arbitrary field around `base` (rgb is the composited value).
SweepStrip pose_sweep(const RadianceField& field, const CameraPose& base, const std::vector<double>& offsets_deg,
                      const RenderConfig& cfg);
/// Full-resolution sweep of one latent z [1, n_z] around the prior's mean pose.
SweepStrip pose_sweep(GeneratorPipeline& gen, const torch::Tensor& z, const CameraPose& base,
                      const std::vector<double>& offsets_deg);

struct EvalRequest {
    std::vector<std::string> metrics{"fid", "precision_recall", "depth_fd", "embedding"};
    int64_t samples = 256;
    int64_t k = 3;
    int64_t n_poses = 128;
    int64_t n_latents = 4;
    int64_t feature_dim = 16;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::optional<double> fid;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> depth_fd;
    std::optional<EmbeddingDiagnostics> embedding;
    /// Metrics that were requested but cannot be computed, with the reason.
    std::vector<std::pair<std::string, std::string>> refused;

    std::string to_json() const;
    std::string summary() const;
};

/// Every requested metric that the inputs support. depth_fd needs ground-truth
/// depth and embedding needs an embedding head; otherwise they are refused.
EvalReport evaluate(GeneratorPipeline& gen, Discriminator& disc, const PoseDistribution& prior, const Dataset& data,
                    const EvalRequest& request);

/// Names accepted in EvalRequest::metrics.
const std::vector<std::string>& metric_names();

} // namespace posefree
