// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/discriminator.hpp"
#include "posefree/pipeline.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace posefree {

enum class PoseNorm { L1, L2 };

PoseNorm parse_pose_norm(std::string_view text);
std::string pose_norm_name(PoseNorm norm);

struct LossWeights {
    double lambda_r1 = 1.0;
    double lambda_pose = 1.0;
    /// Weight of the contrastive term; follows lambda_pose when unset.
    std::optional<double> lambda_contrast;
    double tau = 0.25;
    PoseNorm pose_norm = PoseNorm::L2;

    void validate() const;
    double contrast_weight() const { return lambda_contrast.value_or(lambda_pose); }
};

/// f(u) = -log(1 + exp(-u)), evaluated without overflow.
double softplus_gan_f(double u);
torch::Tensor softplus_gan_f(const torch::Tensor& u);

/// Logit of a batch of image pairs, [B].
using LogitFn = std::function<torch::Tensor(const ImagePair&)>;

struct R1Result {
    torch::Tensor penalty; ///< scalar, differentiable w.r.t. the discriminator parameters
    torch::Tensor logits;  ///< [B], from the same forward pass
};

/// Batch mean of ||d logit / d pixels||^2 over both members of the pair.
/// The pair is re-leafed internally, so callers can pass plain tensors.
R1Result r1_penalty_with_logits(const LogitFn& logits, const ImagePair& real);
torch::Tensor r1_penalty(const LogitFn& logits, const ImagePair& real);

/// Batch mean of ||c_hat - c|| under the chosen norm. c_hat, c: [B, 2] (or [2]).
torch::Tensor pose_regression_loss(const torch::Tensor& c_hat, const torch::Tensor& c, PoseNorm norm);

/// u^T v / (||u|| ||v||) along the last axis, with the same epsilon guard as normalize_embedding.
torch::Tensor cosine_similarity(const torch::Tensor& u, const torch::Tensor& v);

/// InfoNCE with cosine similarity and temperature tau, log-sum-exp stabilized.
/// anchor, positive: [..., m]; negatives: [..., S, m]. Returns [...].
torch::Tensor info_nce(const torch::Tensor& anchor, const torch::Tensor& positive, const torch::Tensor& negatives,
                       double tau);

/// Generated images with the poses they were rendered at. Only this type
/// feeds the pose-aware loss terms; real images travel as RealBatch.
struct FakeBatch {
    std::vector<CameraPose> poses;
    torch::Tensor latents; ///< [B, n_z]
    Synthesized synth;

    int64_t size() const { return static_cast<int64_t>(poses.size()); }
    const ImagePair& images() const { return synth.images; }
    /// (pitch, yaw) rendering targets, [B, 2], dtype of the images.
    torch::Tensor pose_vectors() const;
    FakeBatch detached() const;
};

/// Anchors and positives share poses exactly and differ in latents; the
/// negatives of anchor i are every other anchor and every other positive.
struct ContrastBatch {
    FakeBatch anchors;
    FakeBatch positives;
    std::vector<std::vector<int64_t>> negatives; ///< indices into [anchors; positives]

    int64_t size() const { return anchors.size(); }
    int64_t negatives_per_anchor() const { return negatives.empty() ? 0 : static_cast<int64_t>(negatives[0].size()); }
    ContrastBatch detached() const;
};

/// Real images. Carries no ground-truth fields by construction. `condition`
/// is only set for the pose-conditioned variant.
struct RealBatch {
    ImagePair images;
    std::optional<torch::Tensor> condition;
};

/// S = 2 (N - 1) in-batch negatives per anchor.
std::vector<std::vector<int64_t>> in_batch_negatives(int64_t n);

/// Draws n poses and redraws any that lie within `min_separation` rad of an
/// earlier pose in both pitch and yaw.
std::vector<CameraPose> sample_distinct_poses(const PoseDistribution& dist, int64_t n, Rng& rng,
                                              double min_separation = 1e-4, int max_attempts = 1000);

FakeBatch generate_fakes(GeneratorPipeline& gen, std::vector<CameraPose> poses, torch::Tensor latents,
                         at::Generator* jitter);

/// Renders anchors G(z_a, c_i) and positives G(z_p, c_i).
ContrastBatch build_contrast_batch(GeneratorPipeline& gen, std::span<const CameraPose> poses,
                                   const torch::Tensor& anchor_latents, const torch::Tensor& positive_latents,
                                   at::Generator* jitter);
/// Same, drawing both latent sets (and the render jitter) from `rng`.
ContrastBatch build_contrast_batch(GeneratorPipeline& gen, std::span<const CameraPose> poses, Rng& rng);

/// Mean InfoNCE over anchors. anchor/positive embeddings: [N, m].
torch::Tensor contrastive_loss_from_embeddings(const torch::Tensor& anchor_emb, const torch::Tensor& positive_emb,
                                               const std::vector<std::vector<int64_t>>& negatives, double tau);
torch::Tensor contrastive_loss(const ContrastBatch& batch, Discriminator& disc, double tau);

/// Pose regression term of the discriminator on generated images.
torch::Tensor pose_term(Discriminator& disc, const FakeBatch& fakes, PoseNorm norm);

struct R1Schedule {
    bool active = true;
    double scale = 1.0; ///< lazy-regularization multiplier
};

struct LossBreakdown {
    torch::Tensor total;
    double gan = 0.0;
    std::optional<double> r1;
    std::optional<double> pose;
    std::optional<double> info_nce;
    std::optional<double> real_logit_mean;
    double fake_logit_mean = 0.0;
};

/// softplus(-D(real)) + softplus(D(fake)) + (lambda_r1 / 2) * scale * R1
///   + lambda_pose * L_pose + lambda_contrast * L_InfoNCE (auxiliary terms per variant).
/// When `contrast` is given, `fakes` must be `contrast->anchors`.
LossBreakdown discriminator_loss(Discriminator& disc, const LossWeights& weights, const RealBatch& real,
                                 const FakeBatch& fakes, const ContrastBatch* contrast, R1Schedule r1);

/// softplus(-D(fake)) + the same auxiliary terms, evaluated on generated images.
LossBreakdown generator_loss(Discriminator& disc, const LossWeights& weights, const FakeBatch& fakes,
                             const ContrastBatch* contrast);

struct ObjectiveResult {
    LossBreakdown d;
    LossBreakdown g;
};

/// Both players' losses on one set of inputs, without any parameter update.
ObjectiveResult total_objective(Discriminator& disc, const LossWeights& weights, const RealBatch& real,
                                const FakeBatch& fakes, const ContrastBatch* contrast, R1Schedule r1 = {});

} // namespace posefree
