// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/errors.hpp"
#include "posefree/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace posefree;

TEST(Rng, DerivedStreamsAreDistinctAndReproducible) {
    EXPECT_EQ(derive_seed(3, "a", 0), derive_seed(3, "a", 0));
    EXPECT_NE(derive_seed(3, "a", 0), derive_seed(3, "a", 1));
    EXPECT_NE(derive_seed(3, "a", 0), derive_seed(3, "b", 0));
    EXPECT_NE(derive_seed(3, "a", 0), derive_seed(4, "a", 0));

    Rng a(9, "poses", 2);
    Rng b(9, "poses", 2);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());

    Rng c(5);
    Rng d(5);
    auto gc = c.fork_torch();
    auto gd = d.fork_torch();
    EXPECT_TRUE(torch::equal(torch::randn({8}, gc), torch::randn({8}, gd)));
}

TEST(Geometry, MatrixIsRigidAndLooksAtOrigin) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const CameraPose pose{rng.uniform(0.2, kPi - 0.2), rng.uniform(0.0, 2 * kPi), rng.uniform(1.5, 4.0), 0.5};
        const auto m = pose_to_matrix(pose);
        const Eigen::Matrix3d r = m.block<3, 3>(0, 0);
        EXPECT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).norm(), 1e-12);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
        const Eigen::Vector3d pos = m.block<3, 1>(0, 3);
        EXPECT_NEAR(pos.norm(), pose.radius, 1e-12);
        // The back axis points from the origin to the camera.
        EXPECT_LT((m.block<3, 1>(0, 2) - pos.normalized()).norm(), 1e-12);
        // Camera up has a non-negative world-z component (no roll flip).
        EXPECT_GE(m(2, 1), 0.0);
    }
}

TEST(Geometry, EquatorialCameraPositionMatchesSphericalCoordinates) {
    const auto m = pose_to_matrix({kPi / 2, 0.0, 2.0, 0.3});
    EXPECT_NEAR(m(0, 3), 2.0, 1e-12);
    EXPECT_NEAR(m(1, 3), 0.0, 1e-12);
    EXPECT_NEAR(m(2, 3), 0.0, 1e-12);
    const auto top = pose_to_matrix({0.1, kPi / 2, 2.0, 0.3});
    EXPECT_NEAR(top(2, 3), 2.0 * std::cos(0.1), 1e-12);
}

TEST(Geometry, DegeneratePitchIsRejected) {
    EXPECT_THROW(pose_to_matrix({0.0, 1.0, 2.7, 0.2}), ContractViolation);
    EXPECT_THROW(pose_to_matrix({kPi, 1.0, 2.7, 0.2}), ContractViolation);
}

TEST(Geometry, RaysAreUnitAndSpanTheFieldOfView) {
    const CameraPose pose{1.2, 0.7, 2.5, 0.6};
    const int64_t res = 9;
    const auto rays = generate_rays(pose, res, 1.3, 3.7, torch::kFloat64);
    const auto norms = rays.directions.norm(2, -1);
    EXPECT_LT((norms - 1.0).abs().max().item<double>(), 1e-12);

    const auto m = pose_to_matrix(pose);
    const Eigen::Vector3d forward = -m.block<3, 1>(0, 2);
    const auto dir_at = [&](int64_t i, int64_t j) {
        return Eigen::Vector3d(rays.directions[i][j][0].item<double>(), rays.directions[i][j][1].item<double>(),
                               rays.directions[i][j][2].item<double>());
    };
    // Odd resolution: the middle pixel looks straight at the origin.
    EXPECT_LT((dir_at(4, 4) - forward).norm(), 1e-12);
    // Corner pixel centre sits at ((res-1)/res) * tan(fov/2) on both image axes.
    const double off = (static_cast<double>(res - 1) / static_cast<double>(res)) * std::tan(pose.fov / 2);
    const double expected_cos = 1.0 / std::sqrt(1.0 + 2.0 * off * off);
    EXPECT_NEAR(dir_at(0, 0).dot(forward), expected_cos, 1e-12);
    // Row 0 is the top of the image, column 0 the left.
    const Eigen::Vector3d up = m.block<3, 1>(0, 1);
    const Eigen::Vector3d right = m.block<3, 1>(0, 0);
    EXPECT_GT(dir_at(0, 4).dot(up), 0.0);
    EXPECT_LT(dir_at(4, 0).dot(right), 0.0);
    EXPECT_TRUE(torch::allclose(rays.origins[3][5],
                                torch::tensor({m(0, 3), m(1, 3), m(2, 3)}, torch::kFloat64)));
}

TEST(Geometry, AngleLawParseRoundTrip) {
    for (const auto& law : {AngleLaw::gaussian(1.5, 0.25), AngleLaw::uniform(-0.5, 2.0), AngleLaw::fixed(0.3)}) {
        EXPECT_EQ(AngleLaw::parse(law.to_string()), law);
    }
    EXPECT_THROW(AngleLaw::parse("cauchy:1,2"), ConfigError);
    EXPECT_THROW(AngleLaw::parse("gaussian:1"), ConfigError);
    EXPECT_THROW(AngleLaw::parse("uniform:2,1"), ConfigError);
    EXPECT_THROW(AngleLaw::parse("gaussian:1,-1"), ConfigError);
}

TEST(Geometry, PresetsValidateAndUnknownNamesThrow) {
    for (const auto& name : PoseDistribution::preset_names()) EXPECT_NO_THROW(PoseDistribution::preset(name).validate());
    EXPECT_THROW(PoseDistribution::preset("ffhq_typo"), ConfigError);
    const auto church = PoseDistribution::preset("church");
    EXPECT_EQ(church.pitch.kind, AngleLaw::Kind::Fixed);
    EXPECT_NEAR(church.yaw.b - church.yaw.a, 2 * 5 * kPi / 18, 1e-15);
}

TEST(Geometry, SamplesAreCanonicalAndFollowTheLaw) {
    const auto dist = PoseDistribution::preset("cub");
    Rng rng(11);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const auto p = sample_pose(dist, rng);
        ASSERT_GE(p.yaw, 0.0);
        ASSERT_LT(p.yaw, 2 * kPi);
        ASSERT_GT(p.pitch, 0.0);
        ASSERT_LT(p.pitch, kPi);
        sum += p.pitch;
        sq += p.pitch * p.pitch;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    EXPECT_NEAR(mean, kPi / 2, 0.005);
    EXPECT_NEAR(sd, 0.13, 0.005);
}

TEST(Geometry, ExtremePitchDrawsAreClamped) {
    PoseDistribution d;
    d.pitch = AngleLaw::fixed(0.0);
    d.yaw = AngleLaw::fixed(-kPi / 2);
    Rng rng(0);
    const auto p = sample_pose(d, rng);
    EXPECT_NEAR(p.pitch, kPitchEpsilon, 1e-15);
    EXPECT_NEAR(p.yaw, 3 * kPi / 2, 1e-12);
    EXPECT_NO_THROW(pose_to_matrix(p));
}

TEST(Geometry, PoseTensorLayout) {
    const std::vector<CameraPose> poses{{1.0, 2.0, 2.7, 0.2}, {0.5, 0.25, 2.7, 0.2}};
    const auto t = poses_to_tensor(poses, torch::kFloat64);
    EXPECT_TRUE(torch::equal(t, torch::tensor({{1.0, 2.0}, {0.5, 0.25}}, torch::kFloat64)));
    EXPECT_EQ(vector_to_pose(pose_to_vector(poses[0]), 2.7, 0.2), poses[0]);
}
