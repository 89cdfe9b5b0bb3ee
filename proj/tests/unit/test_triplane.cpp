// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include "posefree/errors.hpp"
#include "posefree/triplane.hpp"

#include <gtest/gtest.h>

using namespace posefree;

namespace {

GeneratorConfig tiny_config() {
    GeneratorConfig cfg;
    cfg.latent_dim = 8;
    cfg.style_dim = 8;
    cfg.mapping_hidden = 8;
    cfg.plane_resolution = 8;
    cfg.plane_channels = 4;
    cfg.decoder_hidden = 6;
    cfg.feature_channels = 4;
    cfg.plane_base_resolution = 4;
    return cfg;
}

// Plane k holds a_k * u + b_k * v + c_k in every channel, sampled on an align-corners grid.
TriPlane linear_planes(int64_t res, const std::array<std::array<double, 3>, 3>& coef) {
    auto planes = torch::empty({1, 3, 2, res, res}, torch::kFloat64);
    for (int64_t k = 0; k < 3; ++k)
        for (int64_t row = 0; row < res; ++row)
            for (int64_t col = 0; col < res; ++col) {
                const double u = -1.0 + 2.0 * static_cast<double>(col) / static_cast<double>(res - 1);
                const double v = -1.0 + 2.0 * static_cast<double>(row) / static_cast<double>(res - 1);
                const auto& c = coef[static_cast<size_t>(k)];
                planes[0][k][0][row][col] = c[0] * u + c[1] * v + c[2];
                planes[0][k][1][row][col] = 1.0;
            }
    return TriPlane{planes};
}

} // namespace

TEST(TriPlane, BilinearSamplingReproducesLinearPlanes) {
    const std::array<std::array<double, 3>, 3> coef{{{0.5, -1.0, 0.1}, {2.0, 0.25, -0.3}, {-0.7, 1.5, 0.2}}};
    const auto tp = linear_planes(9, coef);
    const auto pts = torch::rand({1, 50, 3}, torch::kFloat64) * 2.0 - 1.0;
    const auto out = sample_triplane(tp, pts);
    ASSERT_EQ(out.sizes(), torch::IntArrayRef({1, 50, 2}));
    for (int64_t i = 0; i < 50; ++i) {
        const double x = pts[0][i][0].item<double>();
        const double y = pts[0][i][1].item<double>();
        const double z = pts[0][i][2].item<double>();
        // xy, xz, yz planes in that order; the first coordinate runs along the plane width.
        const double expected = coef[0][0] * x + coef[0][1] * y + coef[0][2] + coef[1][0] * x + coef[1][1] * z +
                                coef[1][2] + coef[2][0] * y + coef[2][1] * z + coef[2][2];
        EXPECT_NEAR(out[0][i][0].item<double>(), expected, 1e-12);
        EXPECT_NEAR(out[0][i][1].item<double>(), 3.0, 1e-12);
    }
}

TEST(TriPlane, PointsOutsideTheCubeAreClampedToTheBorder) {
    const std::array<std::array<double, 3>, 3> coef{{{1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}}};
    const auto tp = linear_planes(5, coef);
    const auto pts = torch::tensor({{{3.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {-7.0, 0.5, 9.0}}}, torch::kFloat64);
    const auto out = sample_triplane(tp, pts);
    EXPECT_NEAR(out[0][0][0].item<double>(), 1.0, 1e-12);
    EXPECT_NEAR(out[0][1][0].item<double>(), 1.0, 1e-12);
    EXPECT_NEAR(out[0][2][0].item<double>(), -1.0, 1e-12);
    EXPECT_EQ(count_outside_cube(pts), 2);
}

TEST(TriPlane, GeneratorShapesAndDeterminism) {
    const auto cfg = tiny_config();
    TriPlaneGenerator a(cfg, 5);
    TriPlaneGenerator b(cfg, 5);
    TriPlaneGenerator c(cfg, 6);
    const auto z = torch::randn({2, cfg.latent_dim});
    const auto pa = a->synthesize_planes(a->map_latent(z));
    EXPECT_EQ(pa.planes.sizes(), torch::IntArrayRef({2, 3, cfg.plane_channels, 8, 8}));
    EXPECT_TRUE(torch::equal(pa.planes, b->synthesize_planes(b->map_latent(z)).planes));
    EXPECT_FALSE(torch::equal(pa.planes, c->synthesize_planes(c->map_latent(z)).planes));
}

TEST(TriPlane, DimensionMismatchesAreConfigErrors) {
    const auto cfg = tiny_config();
    TriPlaneGenerator g(cfg, 0);
    EXPECT_THROW(g->map_latent(torch::randn({2, cfg.latent_dim + 1})), ConfigError);
    EXPECT_THROW(g->synthesize_planes(torch::randn({2, cfg.style_dim + 3})), ConfigError);
    auto bad = cfg;
    bad.feature_channels = 2;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TriPlane, DecodedFieldIsNonNegativeAndBounded) {
    const auto cfg = tiny_config();
    TriPlaneGenerator g(cfg, 1);
    const auto field = g->field(torch::randn({3, cfg.latent_dim}));
    const auto out = field.query(torch::rand({3, 40, 3}) * 4.0 - 2.0);
    EXPECT_EQ(out.density.sizes(), torch::IntArrayRef({3, 40}));
    EXPECT_EQ(out.features.sizes(), torch::IntArrayRef({3, 40, cfg.feature_channels}));
    EXPECT_TRUE((out.density >= 0).all().item<bool>());
    EXPECT_TRUE(((out.features >= 0) & (out.features <= 1)).all().item<bool>());
    EXPECT_EQ(field.feature_channels(), cfg.feature_channels);
}

TEST(TriPlane, DecodePointGradientMatchesFiniteDifferences) {
    auto cfg = tiny_config();
    TriPlaneGenerator g(cfg, 2);
    g->to(torch::kFloat64);
    const auto feats = torch::randn({2, 5, cfg.plane_channels}, torch::kFloat64).requires_grad_();
    const auto probe = torch::randn({2, 5, 1 + cfg.feature_channels}, torch::kFloat64);
    auto loss_of = [&](const torch::Tensor& f) {
        const auto d = g->decode_point(f);
        return (torch::cat({d.density.unsqueeze(-1), d.features}, -1) * probe).sum();
    };
    loss_of(feats).backward();
    const auto num = posefree::testing::numeric_gradient(
        [&](const torch::Tensor& f) { return loss_of(f).item<double>(); }, feats);
    EXPECT_LT(posefree::testing::relative_error(feats.grad(), num), 1e-6);

    // Parameter gradients of the decoder as well.
    auto& w = g->decoder->fc1->weight;
    g->zero_grad();
    loss_of(feats.detach()).backward();
    const auto analytic = w.grad().clone();
    const auto num_w = posefree::testing::numeric_gradient(
        [&](const torch::Tensor& value) {
            torch::NoGradGuard guard;
            const auto saved = w.detach().clone();
            w.copy_(value);
            const double l = loss_of(feats.detach()).item<double>();
            w.copy_(saved);
            return l;
        },
        w);
    EXPECT_LT(posefree::testing::relative_error(analytic, num_w), 1e-6);
}
