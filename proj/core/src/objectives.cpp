// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/objectives.hpp"

#include "posefree/errors.hpp"

#include <torch/torch.h>

#include <cmath>

namespace posefree {

namespace F = torch::nn::functional;

PoseNorm parse_pose_norm(std::string_view text) {
    if (text == "l1") return PoseNorm::L1;
    if (text == "l2") return PoseNorm::L2;
    throw ConfigError("pose_norm must be l1 or l2, got '" + std::string(text) + "'");
}

std::string pose_norm_name(PoseNorm norm) {
    return norm == PoseNorm::L1 ? "l1" : "l2";
}

void LossWeights::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("loss.tau must be > 0");
    if (!(lambda_r1 >= 0.0) || !std::isfinite(lambda_r1)) throw ConfigError("loss.lambda_r1 must be >= 0");
    if (!(lambda_pose >= 0.0) || !std::isfinite(lambda_pose)) throw ConfigError("loss.lambda_pose must be >= 0");
    if (lambda_contrast && (!(*lambda_contrast >= 0.0) || !std::isfinite(*lambda_contrast))) {
        throw ConfigError("loss.lambda_contrast must be >= 0");
    }
}

double softplus_gan_f(double u) {
    // -log(1 + e^{-u}) = -(max(-u, 0) + log1p(e^{-|u|}))
    return -(std::max(-u, 0.0) + std::log1p(std::exp(-std::abs(u))));
}

torch::Tensor softplus_gan_f(const torch::Tensor& u) {
    return -F::softplus(-u);
}

R1Result r1_penalty_with_logits(const LogitFn& logits, const ImagePair& real) {
    auto high = real.high.detach().requires_grad_(true);
    auto low = real.low_upsampled.detach().requires_grad_(true);
    R1Result out;
    out.logits = logits(ImagePair{high, low});
    const int64_t b = high.size(0);
    if (!out.logits.requires_grad()) {
        out.penalty = torch::zeros({}, high.options().requires_grad(false));
        return out;
    }
    auto grads = torch::autograd::grad({out.logits.sum()}, {high, low}, /*grad_outputs=*/{},
                                       /*retain_graph=*/true, /*create_graph=*/true, /*allow_unused=*/true);
    auto per_sample = torch::zeros({b}, high.options().requires_grad(false));
    for (const auto& g : grads) {
        if (g.defined()) per_sample = per_sample + g.pow(2).reshape({b, -1}).sum(1);
    }
    out.penalty = per_sample.mean();
    return out;
}

torch::Tensor r1_penalty(const LogitFn& logits, const ImagePair& real) {
    return r1_penalty_with_logits(logits, real).penalty;
}

torch::Tensor pose_regression_loss(const torch::Tensor& c_hat, const torch::Tensor& c, PoseNorm norm) {
    TORCH_CHECK(c_hat.sizes() == c.sizes(), "pose estimate and target must share shape");
    const auto diff = c_hat - c;
    // linalg norm has a zero subgradient at the origin, so c_hat == c stays finite
    const auto per_sample = torch::linalg_vector_norm(diff, norm == PoseNorm::L1 ? 1 : 2, {-1}, false, std::nullopt);
    return per_sample.mean();
}

torch::Tensor cosine_similarity(const torch::Tensor& u, const torch::Tensor& v) {
    const auto nu = u.norm(2, -1).clamp_min(kNormEpsilon);
    const auto nv = v.norm(2, -1).clamp_min(kNormEpsilon);
    return (u * v).sum(-1) / (nu * nv);
}

torch::Tensor info_nce(const torch::Tensor& anchor, const torch::Tensor& positive, const torch::Tensor& negatives,
                       double tau) {
    if (!(tau > 0.0)) throw ConfigError("info_nce: temperature must be > 0");
    TORCH_CHECK(negatives.dim() == anchor.dim() + 1, "negatives must be [..., S, m]");
    TORCH_CHECK(negatives.size(-2) >= 1, "info_nce needs at least one negative");
    const auto pos = posefree::cosine_similarity(anchor, positive) / tau;
    const auto neg = posefree::cosine_similarity(anchor.unsqueeze(-2), negatives) / tau;
    const auto logits = torch::cat({pos.unsqueeze(-1), neg}, -1);
    return torch::logsumexp(logits, -1) - pos;
}

torch::Tensor FakeBatch::pose_vectors() const {
    return poses_to_tensor(poses, synth.images.high.scalar_type());
}

FakeBatch FakeBatch::detached() const {
    FakeBatch out;
    out.poses = poses;
    out.latents = latents;
    out.synth.images = synth.images.detached();
    out.synth.rendered = RenderOutput{synth.rendered.feature_map.detach(), synth.rendered.rgb_low.detach(),
                                      synth.rendered.depth.detach(), synth.rendered.opacity.detach()};
    return out;
}

ContrastBatch ContrastBatch::detached() const {
    return ContrastBatch{anchors.detached(), positives.detached(), negatives};
}

std::vector<std::vector<int64_t>> in_batch_negatives(int64_t n) {
    if (n < 2) throw ConfigError("contrastive batches need N >= 2, got " + std::to_string(n));
    std::vector<std::vector<int64_t>> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        auto& row = out[static_cast<size_t>(i)];
        row.reserve(static_cast<size_t>(2 * (n - 1)));
        for (int64_t j = 0; j < n; ++j)
            if (j != i) row.push_back(j);
        for (int64_t j = 0; j < n; ++j)
            if (j != i) row.push_back(n + j);
    }
    return out;
}

std::vector<CameraPose> sample_distinct_poses(const PoseDistribution& dist, int64_t n, Rng& rng,
                                              double min_separation, int max_attempts) {
    std::vector<CameraPose> poses;
    poses.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= max_attempts) {
                throw ConfigError("pose prior is too narrow to draw " + std::to_string(n) + " distinct poses");
            }
            const auto candidate = sample_pose(dist, rng);
            const bool clash = std::any_of(poses.begin(), poses.end(), [&](const CameraPose& p) {
                return std::abs(p.pitch - candidate.pitch) < min_separation &&
                       std::abs(p.yaw - candidate.yaw) < min_separation;
            });
            if (!clash) {
                poses.push_back(candidate);
                break;
            }
        }
    }
    return poses;
}

FakeBatch generate_fakes(GeneratorPipeline& gen, std::vector<CameraPose> poses, torch::Tensor latents,
                         at::Generator* jitter) {
    FakeBatch out;
    out.synth = gen->forward(latents, poses, jitter);
    out.poses = std::move(poses);
    out.latents = std::move(latents);
    return out;
}

ContrastBatch build_contrast_batch(GeneratorPipeline& gen, std::span<const CameraPose> poses,
                                   const torch::Tensor& anchor_latents, const torch::Tensor& positive_latents,
                                   at::Generator* jitter) {
    const auto n = static_cast<int64_t>(poses.size());
    auto negatives = in_batch_negatives(n);
    if (anchor_latents.size(0) != n || positive_latents.size(0) != n) {
        throw ContractViolation("build_contrast_batch: latent and pose counts differ");
    }
    if ((anchor_latents == positive_latents).all(1).any().item<bool>()) {
        throw ContractViolation("build_contrast_batch: a positive reuses its anchor's latent");
    }
    std::vector<CameraPose> pose_list(poses.begin(), poses.end());
    ContrastBatch batch;
    batch.anchors = generate_fakes(gen, pose_list, anchor_latents, jitter);
    batch.positives = generate_fakes(gen, pose_list, positive_latents, jitter);
    batch.negatives = std::move(negatives);
    return batch;
}

ContrastBatch build_contrast_batch(GeneratorPipeline& gen, std::span<const CameraPose> poses, Rng& rng) {
    const auto n = static_cast<int64_t>(poses.size());
    if (n < 2) throw ConfigError("contrastive batches need N >= 2, got " + std::to_string(n));
    auto latent_gen = rng.fork_torch();
    auto jitter = rng.fork_torch();
    auto za = gen->sample_latents(n, latent_gen);
    auto zp = gen->sample_latents(n, latent_gen);
    return build_contrast_batch(gen, poses, za, zp, &jitter);
}

torch::Tensor contrastive_loss_from_embeddings(const torch::Tensor& anchor_emb, const torch::Tensor& positive_emb,
                                               const std::vector<std::vector<int64_t>>& negatives, double tau) {
    const int64_t n = anchor_emb.size(0);
    TORCH_CHECK(positive_emb.sizes() == anchor_emb.sizes(), "anchor and positive embeddings must share shape");
    TORCH_CHECK(static_cast<int64_t>(negatives.size()) == n, "one negative set per anchor");
    const auto pool = torch::cat({anchor_emb, positive_emb}, 0); // [2N, m]
    const int64_t s = static_cast<int64_t>(negatives.front().size());
    auto index = torch::empty({n, s}, torch::kLong);
    auto acc = index.accessor<int64_t, 2>();
    for (int64_t i = 0; i < n; ++i) {
        const auto& row = negatives[static_cast<size_t>(i)];
        TORCH_CHECK(static_cast<int64_t>(row.size()) == s, "negative sets must share size");
        for (int64_t j = 0; j < s; ++j) acc[i][j] = row[static_cast<size_t>(j)];
    }
    const auto negs = pool.index_select(0, index.flatten()).view({n, s, anchor_emb.size(1)});
    return info_nce(anchor_emb, positive_emb, negs, tau).mean();
}

torch::Tensor contrastive_loss(const ContrastBatch& batch, Discriminator& disc, double tau) {
    if (!disc->variant().has_embedding_head()) {
        throw ContractViolation("contrastive_loss: discriminator variant has no embedding head");
    }
    const auto va = discriminate(disc, batch.anchors.images(), std::nullopt).embedding;
    const auto vp = discriminate(disc, batch.positives.images(), std::nullopt).embedding;
    return contrastive_loss_from_embeddings(*va, *vp, batch.negatives, tau);
}

namespace {

torch::Tensor pose_loss_on_fakes(const DiscriminatorOutput& fake_out, const FakeBatch& fakes, PoseNorm norm) {
    if (!fake_out.pose_estimate) throw ContractViolation("pose loss: discriminator variant has no pose head");
    return pose_regression_loss(*fake_out.pose_estimate, fakes.pose_vectors(), norm);
}

std::optional<torch::Tensor> fake_condition(const Discriminator& disc, const FakeBatch& fakes) {
    if (!disc->variant().conditioned()) return std::nullopt;
    return fakes.pose_vectors();
}

void check_contrast(const Discriminator& disc, const FakeBatch& fakes, const ContrastBatch* contrast) {
    if (disc->variant().has_embedding_head() && contrast == nullptr) {
        throw ContractViolation("objective: embedding variants need a contrastive batch");
    }
    if (contrast != nullptr && &contrast->anchors != &fakes) {
        throw ContractViolation("objective: fakes must be the contrastive batch's anchors");
    }
}

// Auxiliary terms are appended in a fixed order (pose, then contrast) so the
// ensemble with one weight at zero sums to exactly the single-loss total.
void add_auxiliary_terms(Discriminator& disc, const LossWeights& weights, const DiscriminatorOutput& fake_out,
                         const FakeBatch& fakes, const ContrastBatch* contrast, LossBreakdown& out) {
    const auto& variant = disc->variant();
    if (variant.has_pose_head()) {
        auto pose = pose_loss_on_fakes(fake_out, fakes, weights.pose_norm);
        out.pose = pose.item<double>();
        out.total = out.total + weights.lambda_pose * pose;
    }
    if (variant.has_embedding_head()) {
        const auto pos_out = discriminate(disc, contrast->positives.images(), std::nullopt);
        auto nce = contrastive_loss_from_embeddings(*fake_out.embedding, *pos_out.embedding, contrast->negatives,
                                                    weights.tau);
        out.info_nce = nce.item<double>();
        out.total = out.total + weights.contrast_weight() * nce;
    }
}

} // namespace

torch::Tensor pose_term(Discriminator& disc, const FakeBatch& fakes, PoseNorm norm) {
    return pose_loss_on_fakes(discriminate(disc, fakes.images(), fake_condition(disc, fakes)), fakes, norm);
}

LossBreakdown discriminator_loss(Discriminator& disc, const LossWeights& weights, const RealBatch& real,
                                 const FakeBatch& fakes, const ContrastBatch* contrast, R1Schedule r1) {
    weights.validate();
    check_contrast(disc, fakes, contrast);

    const auto fake_out = discriminate(disc, fakes.images(), fake_condition(disc, fakes));
    const LogitFn real_logit_fn = [&](const ImagePair& pair) { return discriminate(disc, pair, real.condition).logit; };

    torch::Tensor real_logits;
    torch::Tensor penalty;
    if (r1.active) {
        auto res = r1_penalty_with_logits(real_logit_fn, real.images);
        real_logits = res.logits;
        penalty = res.penalty;
    } else {
        real_logits = real_logit_fn(real.images);
    }

    LossBreakdown out;
    const auto gan = F::softplus(-real_logits).mean() + F::softplus(fake_out.logit).mean();
    out.gan = gan.item<double>();
    out.total = gan;
    if (r1.active) {
        out.r1 = penalty.item<double>();
        out.total = out.total + (0.5 * weights.lambda_r1 * r1.scale) * penalty;
    }
    add_auxiliary_terms(disc, weights, fake_out, fakes, contrast, out);
    out.real_logit_mean = real_logits.mean().item<double>();
    out.fake_logit_mean = fake_out.logit.mean().item<double>();
    return out;
}

LossBreakdown generator_loss(Discriminator& disc, const LossWeights& weights, const FakeBatch& fakes,
                             const ContrastBatch* contrast) {
    weights.validate();
    check_contrast(disc, fakes, contrast);

    const auto fake_out = discriminate(disc, fakes.images(), fake_condition(disc, fakes));
    LossBreakdown out;
    const auto gan = F::softplus(-fake_out.logit).mean();
    out.gan = gan.item<double>();
    out.total = gan;
    add_auxiliary_terms(disc, weights, fake_out, fakes, contrast, out);
    out.fake_logit_mean = fake_out.logit.mean().item<double>();
    return out;
}

ObjectiveResult total_objective(Discriminator& disc, const LossWeights& weights, const RealBatch& real,
                                const FakeBatch& fakes, const ContrastBatch* contrast, R1Schedule r1) {
    ObjectiveResult res;
    res.d = discriminator_loss(disc, weights, real, fakes, contrast, r1);
    res.g = generator_loss(disc, weights, fakes, contrast);
    return res;
}

} // namespace posefree
