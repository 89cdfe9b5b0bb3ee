// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/rng.hpp"

#include <Eigen/Dense>
#include <torch/types.h>

#include <array>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace posefree {

inline constexpr double kPi = std::numbers::pi;
/// Pitch is kept inside (eps, pi - eps) so the look-at frame is defined.
inline constexpr double kPitchEpsilon = 1e-3;

/// Camera on a sphere around the origin. Pitch is the polar angle from +z
/// (pi/2 is the equator); yaw is the azimuth from +x towards +y.
struct CameraPose {
    double pitch = kPi / 2;
    double yaw = kPi / 2;
    double radius = 2.7;
    double fov = 0.23;

    bool operator==(const CameraPose&) const = default;
};

/// One marginal of the pose prior.
struct AngleLaw {
    enum class Kind { Gaussian, Uniform, Fixed };

    Kind kind = Kind::Fixed;
    double a = kPi / 2; ///< mean | lower bound | value
    double b = 0.0;     ///< stddev | upper bound | unused

    static AngleLaw gaussian(double mean, double stddev) { return {Kind::Gaussian, mean, stddev}; }
    static AngleLaw uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
    static AngleLaw fixed(double value) { return {Kind::Fixed, value, 0.0}; }

    void validate(std::string_view name) const;
    double sample(Rng& rng) const;
    double center() const;

    /// "gaussian:mu,sigma", "uniform:lo,hi", "fixed:v"
    static AngleLaw parse(std::string_view text);
    std::string to_string() const;

    bool operator==(const AngleLaw&) const = default;
};

/// Camera-pose prior used to render fake images.
struct PoseDistribution {
    AngleLaw pitch = AngleLaw::fixed(kPi / 2);
    AngleLaw yaw = AngleLaw::fixed(kPi / 2);
    double radius = 2.7;
    double fov = 0.23;

    void validate() const;
    CameraPose mean_pose() const;

    /// Named presets: bedroom, church, afhq, cub. Throws ConfigError otherwise.
    static PoseDistribution preset(std::string_view name);
    static std::vector<std::string> preset_names();

    bool operator==(const PoseDistribution&) const = default;
};

/// Canonical yaw in [0, 2pi).
double canonical_yaw(double yaw);

CameraPose sample_pose(const PoseDistribution& dist, Rng& rng);

/// Camera-to-world transform: columns are right, up, back (-forward), position.
/// World up is +z; the camera looks at the origin.
Eigen::Matrix4d pose_to_matrix(const CameraPose& pose);

/// Regression target (pitch, yaw).
std::array<double, 2> pose_to_vector(const CameraPose& pose);
CameraPose vector_to_pose(const std::array<double, 2>& v, double radius, double fov);

/// [N, 2] tensor of (pitch, yaw) for a set of poses.
torch::Tensor poses_to_tensor(std::span<const CameraPose> poses, torch::Dtype dtype = torch::kFloat32);

struct RayBatch {
    torch::Tensor origins;    ///< [H, W, 3]
    torch::Tensor directions; ///< [H, W, 3], unit norm
    double near = 0.0;
    double far = 0.0;
};

/// Pinhole rays through pixel centers, row 0 at the top of the image.
RayBatch generate_rays(const CameraPose& pose, int64_t resolution, double near, double far,
                       torch::Dtype dtype = torch::kFloat32);

/// Default ray bounds bracketing the unit cube.
inline double default_near(double radius) { return radius - 1.2; }
inline double default_far(double radius) { return radius + 1.2; }

} // namespace posefree
