// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/metrics.hpp"

#include "posefree/errors.hpp"
#include "posefree/image_io.hpp"
#include "posefree/init.hpp"
#include "posefree/objectives.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace posefree {

namespace F = torch::nn::functional;

RandomProjectionExtractor::RandomProjectionExtractor(int64_t in_channels, int64_t feature_dim, std::uint64_t seed)
    : in_channels_(in_channels) {
    if (in_channels < 1 || feature_dim < 1) throw ConfigError("extractor needs positive channel and feature counts");
    net_ = torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, 16, 3).stride(2).padding(1)),
        torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(16, 32, 3).stride(2).padding(1)),
        torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    head_ = torch::nn::Linear(64, feature_dim);
    init_parameters(*net_, seed, "extractor.conv");
    init_parameters(*head_, seed, "extractor.head");
    net_->to(torch::kFloat64);
    head_->to(torch::kFloat64);
    std::ostringstream id;
    id << "randproj-v1/c" << in_channels << "/d" << feature_dim << "/s" << seed;
    id_ = id.str();
}

FeatureSet RandomProjectionExtractor::extract(const torch::Tensor& images) const {
    if (images.dim() != 4 || images.size(1) != in_channels_) {
        throw ConfigError("extractor " + id_ + " expects [N, " + std::to_string(in_channels_) + ", H, W] input");
    }
    torch::NoGradGuard no_grad;
    const auto x = images.to(torch::kFloat64).contiguous();
    auto net = net_;
    auto head = head_;
    auto h = net->forward(x).flatten(2); // [N, 32, HW]
    const auto pooled = torch::cat({h.mean(-1), h.std(-1, /*unbiased=*/false)}, 1);
    const auto feats = head->forward(pooled).contiguous();

    FeatureSet out;
    out.extractor_id = id_;
    out.features.resize(feats.size(0), feats.size(1));
    const auto acc = feats.accessor<double, 2>();
    for (int64_t i = 0; i < feats.size(0); ++i)
        for (int64_t j = 0; j < feats.size(1); ++j) out.features(i, j) = acc[i][j];
    return out;
}

namespace {

void check_comparable(const FeatureSet& a, const FeatureSet& b) {
    if (a.extractor_id != b.extractor_id) {
        throw ConfigError("feature sets come from different extractors: " + a.extractor_id + " vs " + b.extractor_id);
    }
    if (a.dim() != b.dim()) throw ConfigError("feature sets differ in dimension");
    if (!a.features.allFinite() || !b.features.allFinite()) throw ConfigError("feature set contains non-finite values");
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean) {
    const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

constexpr double kEigenFloor = -1e-6;

// Eigenvalues of a symmetric PSD estimate, with round-off negatives set to zero.
Eigen::VectorXd clipped_eigenvalues(const Eigen::VectorXd& values) {
    Eigen::VectorXd out = values;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (out(i) < kEigenFloor) {
            std::cerr << "warning: frechet_distance: eigenvalue " << out(i) << " below tolerance, clipped to 0\n";
        }
        out(i) = std::max(out(i), 0.0);
    }
    return out;
}

} // namespace

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    check_comparable(a, b);
    if (a.size() < 2 || b.size() < 2) throw ConfigError("frechet_distance needs at least two samples per set");

    const Eigen::VectorXd mu_a = a.features.colwise().mean();
    const Eigen::VectorXd mu_b = b.features.colwise().mean();
    const Eigen::MatrixXd cov_a = covariance(a.features, mu_a);
    const Eigen::MatrixXd cov_b = covariance(b.features, mu_b);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(cov_a);
    const Eigen::VectorXd sqrt_vals = clipped_eigenvalues(eig_a.eigenvalues()).cwiseSqrt();
    const Eigen::MatrixXd sqrt_a = eig_a.eigenvectors() * sqrt_vals.asDiagonal() * eig_a.eigenvectors().transpose();
    Eigen::MatrixXd middle = sqrt_a * cov_b * sqrt_a;
    middle = 0.5 * (middle + middle.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_m(middle, Eigen::EigenvaluesOnly);
    const double trace_sqrt = clipped_eigenvalues(eig_m.eigenvalues()).cwiseSqrt().sum();

    const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
    if (!std::isfinite(value)) throw ConfigError("frechet_distance is not finite");
    if (value < kEigenFloor) std::cerr << "warning: frechet_distance " << value << " clamped to 0\n";
    return std::max(value, 0.0);
}

namespace {

double squared_distance(const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::MatrixXd& y, Eigen::Index j) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double d = x(i, c) - y(j, c);
        s += d * d;
    }
    return s;
}

// Squared distance from each member to its k-th nearest other member.
std::vector<double> knn_radii(const Eigen::MatrixXd& x, int64_t k) {
    const auto n = x.rows();
    std::vector<double> radii(static_cast<size_t>(n));
    std::vector<double> row;
    for (Eigen::Index i = 0; i < n; ++i) {
        row.clear();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) row.push_back(squared_distance(x, i, x, j));
        std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
        radii[static_cast<size_t>(i)] = row[static_cast<size_t>(k - 1)];
    }
    return radii;
}

double coverage(const Eigen::MatrixXd& manifold, const std::vector<double>& radii, const Eigen::MatrixXd& queries) {
    int64_t inside = 0;
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        for (Eigen::Index i = 0; i < manifold.rows(); ++i) {
            if (squared_distance(queries, q, manifold, i) <= radii[static_cast<size_t>(i)]) {
                ++inside;
                break;
            }
        }
    }
    return static_cast<double>(inside) / static_cast<double>(queries.rows());
}

} // namespace

PrecisionRecall precision_recall(const FeatureSet& real, const FeatureSet& fake, int64_t k) {
    check_comparable(real, fake);
    if (k < 1) throw ConfigError("precision_recall needs k >= 1");
    if (k >= real.size() || k >= fake.size()) {
        throw ConfigError("precision_recall needs more than k = " + std::to_string(k) + " samples per set");
    }
    const auto real_radii = knn_radii(real.features, k);
    const auto fake_radii = knn_radii(fake.features, k);
    return {coverage(real.features, real_radii, fake.features), coverage(fake.features, fake_radii, real.features)};
}

double depth_quality(const torch::Tensor& generated, const torch::Tensor& reference, double near, double far,
                     const RandomProjectionExtractor& extractor) {
    if (generated.dim() != 3 || reference.dim() != 3) throw ConfigError("depth sets must be [N, H, W]");
    if (generated.sizes().slice(1) != reference.sizes().slice(1)) {
        throw ConfigError("depth sets differ in resolution");
    }
    if (!(far > near)) throw ConfigError("depth range needs far > near");
    const auto normalize = [&](const torch::Tensor& d) {
        return ((d.to(torch::kFloat64) - near) / (far - near)).clamp(0.0, 1.0).unsqueeze(1);
    };
    return frechet_distance(extractor.extract(normalize(generated)), extractor.extract(normalize(reference)));
}

EmbeddingDiagnostics diagnostics_from_embeddings(const torch::Tensor& embeddings, const torch::Tensor& targets) {
    if (embeddings.dim() != 3) throw ConfigError("embeddings must be [P, L, m]");
    const int64_t p = embeddings.size(0);
    const int64_t l = embeddings.size(1);
    const int64_t m = embeddings.size(2);
    if (p < 4 || l < 2) throw ConfigError("embedding diagnostics need >= 4 poses and >= 2 latents");
    if (targets.sizes() != torch::IntArrayRef({p, 2})) throw ConfigError("targets must be [P, 2]");

    const auto v = normalize_embedding(embeddings.to(torch::kFloat64)).contiguous();
    const auto t = targets.to(torch::kFloat64).contiguous();
    const auto va = v.accessor<double, 3>();
    const auto ta = t.accessor<double, 2>();
    const auto cosine = [&](int64_t p1, int64_t l1, int64_t p2, int64_t l2) {
        double s = 0.0;
        for (int64_t c = 0; c < m; ++c) s += va[p1][l1][c] * va[p2][l2][c];
        return s;
    };

    EmbeddingDiagnostics out;
    double same = 0.0;
    int64_t same_n = 0;
    double diff = 0.0;
    int64_t diff_n = 0;
    for (int64_t a = 0; a < p; ++a) {
        for (int64_t i = 0; i < l; ++i)
            for (int64_t j = i + 1; j < l; ++j, ++same_n) same += cosine(a, i, a, j);
        for (int64_t b = a + 1; b < p; ++b)
            for (int64_t i = 0; i < l; ++i)
                for (int64_t j = 0; j < l; ++j, ++diff_n) diff += cosine(a, i, b, j);
    }
    out.same_pose_sim = same / static_cast<double>(same_n);
    out.diff_pose_sim = diff / static_cast<double>(diff_n);
    out.gap = out.same_pose_sim - out.diff_pose_sim;

    // Linear probe with bias, fitted on the first half of the poses.
    const int64_t train_poses = p / 2;
    const auto rows = [&](int64_t from, int64_t to) {
        Eigen::MatrixXd x((to - from) * l, m + 1);
        Eigen::MatrixXd y((to - from) * l, 2);
        for (int64_t a = from; a < to; ++a) {
            for (int64_t i = 0; i < l; ++i) {
                const auto r = (a - from) * l + i;
                for (int64_t c = 0; c < m; ++c) x(r, c) = va[a][i][c];
                x(r, m) = 1.0;
                y(r, 0) = ta[a][0];
                y(r, 1) = ta[a][1];
            }
        }
        return std::make_pair(x, y);
    };
    const auto [x_train, y_train] = rows(0, train_poses);
    const auto [x_test, y_test] = rows(train_poses, p);
    const Eigen::MatrixXd coef = x_train.completeOrthogonalDecomposition().solve(y_train);
    const Eigen::MatrixXd residual = y_test - x_test * coef;
    const Eigen::RowVectorXd test_mean = y_test.colwise().mean();
    const double sst = (y_test.rowwise() - test_mean).squaredNorm();
    const double sse = residual.squaredNorm();
    out.probe_r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
    return out;
}

EmbeddingDiagnostics embedding_diagnostics(GeneratorPipeline& gen, Discriminator& disc, const PoseDistribution& prior,
                                           int64_t n_poses, int64_t n_latents, std::uint64_t seed) {
    if (!disc->variant().has_embedding_head()) {
        throw ConfigError("embedding diagnostics need a discriminator with an embedding head");
    }
    torch::NoGradGuard no_grad;
    Rng pose_rng(seed, "diagnostics.poses");
    const auto poses = sample_distinct_poses(prior, n_poses, pose_rng);
    auto latent_gen = make_torch_generator(derive_seed(seed, "diagnostics.latents"));
    const auto latents = gen->sample_latents(n_latents, latent_gen);

    std::vector<torch::Tensor> per_latent;
    for (int64_t i = 0; i < n_latents; ++i) {
        const auto z = latents[i].unsqueeze(0).expand({n_poses, latents.size(1)}).contiguous();
        const auto synth = gen->forward(z, poses);
        per_latent.push_back(*discriminate(disc, synth.images, std::nullopt).embedding);
    }
    const auto embeddings = torch::stack(per_latent, 1); // [P, L, m]

    // Yaw is unwrapped around the prior's center so laws crossing 0 stay continuous.
    const double yaw_center = prior.yaw.center();
    auto targets = torch::empty({n_poses, 2}, torch::kFloat64);
    for (int64_t i = 0; i < n_poses; ++i) {
        const auto& pose = poses[static_cast<size_t>(i)];
        targets[i][0] = pose.pitch;
        targets[i][1] = yaw_center + std::remainder(pose.yaw - yaw_center, 2.0 * kPi);
    }
    return diagnostics_from_embeddings(embeddings, targets);
}

std::vector<double> sweep_offsets(double lo_deg, double hi_deg, int64_t steps) {
    if (steps < 1) throw ConfigError("sweep needs at least one step");
    std::vector<double> out(static_cast<size_t>(steps));
    for (int64_t i = 0; i < steps; ++i) {
        out[static_cast<size_t>(i)] =
            i == steps - 1 && steps > 1 ? hi_deg
                                        : lo_deg + (hi_deg - lo_deg) * static_cast<double>(i) /
                                                       static_cast<double>(std::max<int64_t>(steps - 1, 1));
    }
    return out;
}

namespace {

std::vector<CameraPose> swept_poses(const CameraPose& base, const std::vector<double>& offsets_deg,
                                    std::vector<double>& yaws) {
    std::vector<CameraPose> poses;
    for (double off : offsets_deg) {
        CameraPose p = base;
        p.yaw = base.yaw + off * kPi / 180.0;
        yaws.push_back(p.yaw);
        poses.push_back(p);
    }
    return poses;
}

// [B, C, H, W] -> [C, H, B * W], frames side by side.
torch::Tensor tile(const torch::Tensor& frames) {
    return frames.permute({1, 2, 0, 3}).reshape({frames.size(1), frames.size(2), frames.size(0) * frames.size(3)});
}

} // namespace

SweepStrip pose_sweep(const RadianceField& field, const CameraPose& base, const std::vector<double>& offsets_deg,
                      const RenderConfig& cfg) {
    torch::NoGradGuard no_grad;
    SweepStrip out;
    out.yaw_offsets_deg = offsets_deg;
    const auto poses = swept_poses(base, offsets_deg, out.yaws);
    const auto rendered = render(field, poses, cfg, nullptr, torch::kFloat64);
    out.rgb = tile(rendered.rgb_low * 2.0 - 1.0);
    out.depth = tile(rendered.depth.unsqueeze(1))[0];
    return out;
}

SweepStrip pose_sweep(GeneratorPipeline& gen, const torch::Tensor& z, const CameraPose& base,
                      const std::vector<double>& offsets_deg) {
    if (z.dim() != 2 || z.size(0) != 1) throw ConfigError("pose_sweep takes a single latent [1, n_z]");
    torch::NoGradGuard no_grad;
    SweepStrip out;
    out.yaw_offsets_deg = offsets_deg;
    const auto poses = swept_poses(base, offsets_deg, out.yaws);
    const auto zs = z.expand({static_cast<int64_t>(poses.size()), z.size(1)}).contiguous();
    const auto synth = gen->forward(zs, poses);
    out.rgb = tile(synth.images.high);
    out.depth = tile(synth.rendered.depth.unsqueeze(1))[0];
    return out;
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"fid", "precision_recall", "depth_fd", "embedding"};
    return names;
}

namespace {

bool requested(const EvalRequest& req, std::string_view name) {
    return std::find(req.metrics.begin(), req.metrics.end(), name) != req.metrics.end();
}

struct GeneratedSet {
    torch::Tensor images; ///< [N, 3, H, W]
    torch::Tensor depth;  ///< [N, h, w]
};

GeneratedSet generate_eval_set(GeneratorPipeline& gen, const PoseDistribution& prior, int64_t n, std::uint64_t seed) {
    torch::NoGradGuard no_grad;
    constexpr int64_t kChunk = 16;
    Rng pose_rng(seed, "eval.poses");
    auto latent_gen = make_torch_generator(derive_seed(seed, "eval.latents"));
    std::vector<torch::Tensor> images;
    std::vector<torch::Tensor> depths;
    for (int64_t start = 0; start < n; start += kChunk) {
        const auto count = std::min(kChunk, n - start);
        std::vector<CameraPose> poses;
        for (int64_t i = 0; i < count; ++i) poses.push_back(sample_pose(prior, pose_rng));
        const auto synth = gen->forward(gen->sample_latents(count, latent_gen), poses);
        images.push_back(synth.images.high);
        depths.push_back(synth.rendered.depth);
    }
    return {torch::cat(images), torch::cat(depths)};
}

} // namespace

EvalReport evaluate(GeneratorPipeline& gen, Discriminator& disc, const PoseDistribution& prior, const Dataset& data,
                    const EvalRequest& request) {
    for (const auto& m : request.metrics) {
        if (std::find(metric_names().begin(), metric_names().end(), m) == metric_names().end()) {
            throw ConfigError("unknown metric '" + m + "'");
        }
    }
    if (data.records.empty()) throw ConfigError("evaluation dataset is empty");
    const int64_t final_res = gen->config().final_resolution;

    EvalReport report;
    const bool want_images = requested(request, "fid") || requested(request, "precision_recall");
    const bool want_depth = requested(request, "depth_fd");
    if (want_depth && !data.has_ground_truth()) {
        report.refused.emplace_back("depth_fd", "the dataset carries no ground-truth depth");
    }
    const bool depth_ok = want_depth && data.has_ground_truth() && data.depth_range.has_value();

    if (want_images || depth_ok) {
        const auto n_real = std::min<int64_t>(request.samples, static_cast<int64_t>(data.size()));
        const auto fakes = generate_eval_set(gen, prior, request.samples, request.seed);

        if (want_images) {
            std::vector<torch::Tensor> real;
            for (int64_t i = 0; i < n_real; ++i) {
                const auto& img = data.records[static_cast<size_t>(i)].image;
                real.push_back(img.size(-1) == final_res ? img : center_crop_resize(img, final_res));
            }
            const RandomProjectionExtractor extractor(3, request.feature_dim);
            const auto real_feats = extractor.extract(torch::stack(real));
            const auto fake_feats = extractor.extract(fakes.images);
            if (requested(request, "fid")) report.fid = frechet_distance(real_feats, fake_feats);
            if (requested(request, "precision_recall")) {
                const auto pr = precision_recall(real_feats, fake_feats, request.k);
                report.precision = pr.precision;
                report.recall = pr.recall;
            }
        }
        if (depth_ok) {
            std::vector<torch::Tensor> ref;
            for (int64_t i = 0; i < n_real; ++i) ref.push_back(*data.records[static_cast<size_t>(i)].gt_depth);
            const auto reference = torch::stack(ref).to(torch::kFloat64);
            // Generated depth lives at the feature resolution; bring it to the reference grid.
            const auto generated =
                F::interpolate(fakes.depth.to(torch::kFloat64).unsqueeze(1),
                               F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{reference.size(1), reference.size(2)})
                                   .mode(torch::kBilinear)
                                   .align_corners(false))
                    .squeeze(1);
            const auto& render_cfg = gen->config().render;
            const auto [ref_near, ref_far] = *data.depth_range;
            const auto ref_norm = (reference - ref_near) / (ref_far - ref_near);
            const auto gen_norm = (generated - render_cfg.near) / (render_cfg.far - render_cfg.near);
            const RandomProjectionExtractor extractor(1, request.feature_dim);
            report.depth_fd = depth_quality(gen_norm, ref_norm, 0.0, 1.0, extractor);
        }
    }

    if (requested(request, "embedding")) {
        if (disc->variant().has_embedding_head()) {
            report.embedding =
                embedding_diagnostics(gen, disc, prior, request.n_poses, request.n_latents, request.seed);
        } else {
            report.refused.emplace_back("embedding", "the discriminator variant has no embedding head");
        }
    }
    return report;
}

std::string EvalReport::to_json() const {
    using nlohmann::json;
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["fid"] = opt(fid);
    j["precision"] = opt(precision);
    j["recall"] = opt(recall);
    j["depth_fd"] = opt(depth_fd);
    j["same_pose_sim"] = embedding ? json(embedding->same_pose_sim) : json(nullptr);
    j["diff_pose_sim"] = embedding ? json(embedding->diff_pose_sim) : json(nullptr);
    j["gap"] = embedding ? json(embedding->gap) : json(nullptr);
    j["probe_r2"] = embedding ? json(embedding->probe_r2) : json(nullptr);
    json refusals = json::object();
    for (const auto& [name, why] : refused) refusals[name] = why;
    j["refused"] = refusals;
    return j.dump(2);
}

std::string EvalReport::summary() const {
    std::ostringstream os;
    os.precision(4);
    const auto field = [&](const char* name, const std::optional<double>& v) {
        if (v) os << name << '=' << *v << ' ';
    };
    field("fid", fid);
    field("precision", precision);
    field("recall", recall);
    field("depth_fd", depth_fd);
    if (embedding) {
        os << "same=" << embedding->same_pose_sim << " diff=" << embedding->diff_pose_sim
           << " gap=" << embedding->gap << " probe_r2=" << embedding->probe_r2 << ' ';
    }
    for (const auto& r : refused) os << "[refused " << r.first << "] ";
    auto s = os.str();
    if (!s.empty()) s.pop_back();
    return s;
}

} // namespace posefree
