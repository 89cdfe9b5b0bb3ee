// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include "posefree/errors.hpp"
#include "posefree/renderer.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace posefree;
using posefree::testing::brute_force_composite;

namespace {

std::vector<double> to_vec(const torch::Tensor& t) {
    auto c = t.to(torch::kFloat64).contiguous();
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

/// Solid sphere of constant density at the origin; features are constant.
class SphereField : public RadianceField {
public:
    SphereField(double radius, double density) : radius_(radius), density_(density) {}
    PointDecode query(const torch::Tensor& points) const override {
        const auto inside = points.norm(2, -1) <= radius_;
        PointDecode out;
        out.density = torch::where(inside, torch::full_like(inside, density_, points.options()),
                                   torch::zeros({}, points.options()));
        out.features = torch::full({points.size(0), points.size(1), 3}, 0.5, points.options());
        return out;
    }
    int64_t feature_channels() const override { return 3; }

private:
    double radius_;
    double density_;
};

} // namespace

TEST(Composite, MatchesPerRayProducts) {
    torch::manual_seed(0);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t s = 12;
        const auto sigma = torch::rand({3, s}, torch::kFloat64) * 4.0;
        const auto values = torch::rand({3, s, 2}, torch::kFloat64);
        const auto t = std::get<0>(torch::sort(torch::rand({3, s}, torch::kFloat64) * 3.0 + 1.0, -1));
        const auto bg = torch::tensor({0.2, 0.9}, torch::kFloat64);
        const auto res = composite(sigma, values, t, bg, 0.1, 7.0);
        for (int64_t r = 0; r < 3; ++r) {
            std::vector<std::vector<double>> v;
            for (int64_t i = 0; i < s; ++i) v.push_back(to_vec(values[r][i]));
            const auto ref = brute_force_composite(to_vec(sigma[r]), v, to_vec(t[r]), {0.2, 0.9}, 0.1, 7.0);
            EXPECT_NEAR(res.opacity[r].item<double>(), ref.opacity, 1e-12);
            EXPECT_NEAR(res.depth[r].item<double>(), ref.depth, 1e-12);
            EXPECT_NEAR(res.value[r][0].item<double>(), ref.value[0], 1e-12);
            EXPECT_NEAR(res.value[r][1].item<double>(), ref.value[1], 1e-12);
            for (int64_t i = 0; i < s; ++i) EXPECT_NEAR(res.weights[r][i].item<double>(), ref.weights[i], 1e-12);
        }
    }
}

TEST(Composite, EmptyRayReportsBackgroundAndFar) {
    const auto sigma = torch::zeros({4}, torch::kFloat64);
    const auto values = torch::rand({4, 3}, torch::kFloat64);
    const auto t = torch::tensor({1.0, 2.0, 3.0, 4.0}, torch::kFloat64);
    const auto bg = torch::tensor({0.1, 0.2, 0.3}, torch::kFloat64);
    const auto res = composite(sigma, values, t, bg, 1.0, 5.0);
    EXPECT_EQ(res.opacity.item<double>(), 0.0);
    EXPECT_EQ(res.depth.item<double>(), 5.0);
    EXPECT_TRUE(torch::allclose(res.value, bg));
}

TEST(Composite, InfiniteDensityStopsTheRayAtTheFirstSample) {
    const double inf = std::numeric_limits<double>::infinity();
    const auto sigma = torch::tensor({0.0, inf, 3.0}, torch::kFloat64);
    const auto values = torch::tensor({{0.0}, {0.75}, {0.1}}, torch::kFloat64);
    const auto t = torch::tensor({1.0, 1.5, 2.0}, torch::kFloat64);
    const auto res = composite(sigma, values, t, torch::zeros({1}, torch::kFloat64), 0.5, 9.0);
    EXPECT_FALSE(torch::isnan(res.weights).any().item<bool>());
    EXPECT_DOUBLE_EQ(res.weights[1].item<double>(), 1.0);
    EXPECT_DOUBLE_EQ(res.weights[2].item<double>(), 0.0);
    EXPECT_DOUBLE_EQ(res.depth.item<double>(), 1.5);
    EXPECT_DOUBLE_EQ(res.value[0].item<double>(), 0.75);
}

TEST(Composite, RejectsUnsortedDistances) {
    const auto t = torch::tensor({1.0, 1.0, 2.0}, torch::kFloat64);
    EXPECT_THROW(composite(torch::ones({3}, torch::kFloat64), torch::ones({3, 1}, torch::kFloat64), t,
                           torch::zeros({1}, torch::kFloat64), 0.1, 3.0),
                 ContractViolation);
}

TEST(Composite, GradientMatchesFiniteDifferences) {
    torch::manual_seed(3);
    const auto sigma = (torch::rand({2, 6}, torch::kFloat64) * 2.0).requires_grad_();
    const auto values = torch::rand({2, 6, 2}, torch::kFloat64).requires_grad_();
    const auto t = torch::linspace(1.0, 2.0, 6, torch::kFloat64).expand({2, 6}).contiguous();
    const auto bg = torch::tensor({0.3, 0.6}, torch::kFloat64);
    const auto probe = torch::rand({2, 4}, torch::kFloat64);
    auto loss_of = [&](const torch::Tensor& s, const torch::Tensor& v) {
        const auto r = composite(s, v, t, bg, 0.2, 3.0);
        return (torch::cat({r.value, r.depth.unsqueeze(-1), r.opacity.unsqueeze(-1)}, -1) * probe).sum();
    };
    loss_of(sigma, values).backward();
    const auto num_s = posefree::testing::numeric_gradient(
        [&](const torch::Tensor& s) { return loss_of(s, values.detach()).item<double>(); }, sigma);
    const auto num_v = posefree::testing::numeric_gradient(
        [&](const torch::Tensor& v) { return loss_of(sigma.detach(), v).item<double>(); }, values);
    EXPECT_LT(posefree::testing::relative_error(sigma.grad(), num_s), 1e-6);
    EXPECT_LT(posefree::testing::relative_error(values.grad(), num_v), 1e-6);
}

TEST(Render, SampleDistancesStayInsideTheirBins) {
    RenderConfig cfg;
    cfg.samples_per_ray = 8;
    auto gen = make_torch_generator(4);
    const auto t = sample_distances(cfg, 2, 5, torch::kFloat64, &gen);
    const auto bins = torch::arange(8, torch::kFloat64);
    const auto lo = cfg.near + bins * cfg.bin_width();
    EXPECT_TRUE(((t - lo) >= 0).all().item<bool>());
    EXPECT_TRUE(((t - lo) < cfg.bin_width()).all().item<bool>());
    cfg.stratified = false;
    const auto mid = sample_distances(cfg, 1, 1, torch::kFloat64, nullptr);
    EXPECT_TRUE(torch::allclose(mid[0][0], lo + 0.5 * cfg.bin_width()));
}

TEST(Render, SphereDepthAndWeightInvariants) {
    const SphereField field(0.6, 1e4);
    RenderConfig cfg;
    cfg.feature_resolution = 17;
    cfg.samples_per_ray = 96;
    cfg.stratified = false;
    cfg.check_invariants = true;
    const CameraPose pose{1.1, 0.4, 2.7, 0.5};
    const std::vector<CameraPose> poses{pose};
    const auto out = render(field, poses, cfg, nullptr, torch::kFloat64);
    EXPECT_EQ(out.feature_map.sizes(), torch::IntArrayRef({1, 3, 17, 17}));
    EXPECT_NEAR(out.depth[0][8][8].item<double>(), 2.7 - 0.6, cfg.bin_width());
    EXPECT_NEAR(out.opacity[0][8][8].item<double>(), 1.0, 1e-9);
    EXPECT_EQ(out.depth[0][0][0].item<double>(), cfg.far);
    EXPECT_EQ(out.opacity[0][0][0].item<double>(), 0.0);
}

TEST(Render, BatchRowsUseTheirOwnPose) {
    const SphereField field(0.5, 50.0);
    RenderConfig cfg;
    cfg.feature_resolution = 6;
    cfg.samples_per_ray = 16;
    cfg.stratified = false;
    const std::vector<CameraPose> poses{{1.0, 0.3, 2.7, 0.9}, {1.4, 2.0, 2.0, 0.4}};
    const auto both = render(field, poses, cfg, nullptr, torch::kFloat64);
    for (size_t i = 0; i < poses.size(); ++i) {
        const std::vector<CameraPose> one{poses[i]};
        const auto single = render(field, one, cfg, nullptr, torch::kFloat64);
        EXPECT_TRUE(torch::allclose(both.feature_map[static_cast<int64_t>(i)], single.feature_map[0]));
    }
}
