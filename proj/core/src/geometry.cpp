// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/geometry.hpp"

#include "posefree/errors.hpp"

#include <torch/torch.h>

#include <charconv>
#include <cmath>
#include <sstream>

namespace posefree {

namespace {

double parse_number(std::string_view text, std::string_view context) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError("cannot parse number '" + std::string(text) + "' in " + std::string(context));
    }
    return value;
}

double clamp_pitch(double pitch) {
    return std::clamp(pitch, kPitchEpsilon, kPi - kPitchEpsilon);
}

} // namespace

void AngleLaw::validate(std::string_view name) const {
    const std::string label(name);
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw ConfigError(label + " law has non-finite parameters");
    }
    switch (kind) {
    case Kind::Gaussian:
        if (b < 0.0) throw ConfigError(label + " gaussian sigma must be >= 0");
        break;
    case Kind::Uniform:
        if (a > b) throw ConfigError(label + " uniform bounds must satisfy lo <= hi");
        break;
    case Kind::Fixed:
        break;
    }
}

double AngleLaw::sample(Rng& rng) const {
    switch (kind) {
    case Kind::Gaussian:
        return b == 0.0 ? a : rng.normal(a, b);
    case Kind::Uniform:
        return a == b ? a : rng.uniform(a, b);
    case Kind::Fixed:
        return a;
    }
    return a;
}

double AngleLaw::center() const {
    return kind == Kind::Uniform ? 0.5 * (a + b) : a;
}

AngleLaw AngleLaw::parse(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw ConfigError("angle law '" + std::string(text) + "' must look like kind:params");
    }
    const auto kind = text.substr(0, colon);
    const auto params = text.substr(colon + 1);
    if (kind == "fixed") {
        return fixed(parse_number(params, "fixed law"));
    }
    const auto comma = params.find(',');
    if (comma == std::string_view::npos) {
        throw ConfigError("angle law '" + std::string(text) + "' needs two parameters");
    }
    const double p0 = parse_number(params.substr(0, comma), "angle law");
    const double p1 = parse_number(params.substr(comma + 1), "angle law");
    AngleLaw law;
    if (kind == "gaussian") {
        law = gaussian(p0, p1);
    } else if (kind == "uniform") {
        law = uniform(p0, p1);
    } else {
        throw ConfigError("unknown angle law kind '" + std::string(kind) + "'");
    }
    law.validate(text);
    return law;
}

std::string AngleLaw::to_string() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
    case Kind::Gaussian: os << "gaussian:" << a << ',' << b; break;
    case Kind::Uniform: os << "uniform:" << a << ',' << b; break;
    case Kind::Fixed: os << "fixed:" << a; break;
    }
    return os.str();
}

void PoseDistribution::validate() const {
    pitch.validate("pitch");
    yaw.validate("yaw");
    if (!(radius > 0.0)) throw ConfigError("camera radius must be > 0");
    if (!(fov > 0.0 && fov < kPi)) throw ConfigError("fov must lie in (0, pi)");
    if (default_near(radius) <= 0.0) throw ConfigError("camera radius must exceed 1.2 to bracket the unit cube");
}

CameraPose PoseDistribution::mean_pose() const {
    return {clamp_pitch(pitch.center()), canonical_yaw(yaw.center()), radius, fov};
}

PoseDistribution PoseDistribution::preset(std::string_view name) {
    constexpr double half_pi = kPi / 2;
    PoseDistribution d;
    if (name == "bedroom") {
        d.pitch = AngleLaw::gaussian(half_pi, 0.10);
        d.yaw = AngleLaw::gaussian(half_pi, 0.70);
    } else if (name == "church") {
        d.pitch = AngleLaw::fixed(half_pi);
        d.yaw = AngleLaw::uniform(half_pi - 5 * kPi / 18, half_pi + 5 * kPi / 18);
    } else if (name == "afhq") {
        d.pitch = AngleLaw::gaussian(half_pi, 0.13);
        d.yaw = AngleLaw::gaussian(half_pi, 0.19);
    } else if (name == "cub") {
        d.pitch = AngleLaw::gaussian(half_pi, 0.13);
        d.yaw = AngleLaw::uniform(half_pi - 3 * kPi / 4, half_pi + 3 * kPi / 4);
    } else {
        throw ConfigError("unknown pose prior preset '" + std::string(name) + "'");
    }
    return d;
}

std::vector<std::string> PoseDistribution::preset_names() {
    return {"bedroom", "church", "afhq", "cub"};
}

double canonical_yaw(double yaw) {
    constexpr double two_pi = 2 * kPi;
    double y = std::fmod(yaw, two_pi);
    if (y < 0.0) y += two_pi;
    // fmod of a tiny negative number can land exactly on 2pi after the shift
    return y >= two_pi ? 0.0 : y;
}

CameraPose sample_pose(const PoseDistribution& dist, Rng& rng) {
    dist.validate();
    CameraPose pose;
    pose.pitch = clamp_pitch(dist.pitch.sample(rng));
    pose.yaw = canonical_yaw(dist.yaw.sample(rng));
    pose.radius = dist.radius;
    pose.fov = dist.fov;
    return pose;
}

Eigen::Matrix4d pose_to_matrix(const CameraPose& pose) {
    if (!(pose.pitch > 0.0 && pose.pitch < kPi)) {
        throw ContractViolation("pose_to_matrix: pitch must lie strictly inside (0, pi)");
    }
    if (!(pose.radius > 0.0)) {
        throw ContractViolation("pose_to_matrix: radius must be positive");
    }
    const Eigen::Vector3d position = pose.radius * Eigen::Vector3d(std::sin(pose.pitch) * std::cos(pose.yaw),
                                                                   std::sin(pose.pitch) * std::sin(pose.yaw),
                                                                   std::cos(pose.pitch));
    const Eigen::Vector3d forward = (-position).normalized();
    const Eigen::Vector3d world_up(0.0, 0.0, 1.0);
    const Eigen::Vector3d right = forward.cross(world_up).normalized();
    const Eigen::Vector3d up = right.cross(forward);

    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<3, 1>(0, 0) = right;
    m.block<3, 1>(0, 1) = up;
    m.block<3, 1>(0, 2) = -forward;
    m.block<3, 1>(0, 3) = position;
    return m;
}

std::array<double, 2> pose_to_vector(const CameraPose& pose) {
    return {pose.pitch, pose.yaw};
}

CameraPose vector_to_pose(const std::array<double, 2>& v, double radius, double fov) {
    return {v[0], v[1], radius, fov};
}

torch::Tensor poses_to_tensor(std::span<const CameraPose> poses, torch::Dtype dtype) {
    auto out = torch::empty({static_cast<int64_t>(poses.size()), 2}, torch::kFloat64);
    auto acc = out.accessor<double, 2>();
    for (size_t i = 0; i < poses.size(); ++i) {
        acc[i][0] = poses[i].pitch;
        acc[i][1] = poses[i].yaw;
    }
    return out.to(dtype);
}

RayBatch generate_rays(const CameraPose& pose, int64_t resolution, double near, double far, torch::Dtype dtype) {
    if (resolution < 1) throw ContractViolation("generate_rays: resolution must be >= 1");
    if (!(near > 0.0 && near < far)) throw ContractViolation("generate_rays: need 0 < near < far");

    const Eigen::Matrix4d c2w = pose_to_matrix(pose);
    const double tan_half = std::tan(0.5 * pose.fov);

    auto dirs = torch::empty({resolution, resolution, 3}, torch::kFloat64);
    auto acc = dirs.accessor<double, 3>();
    const Eigen::Matrix3d rot = c2w.block<3, 3>(0, 0);
    for (int64_t i = 0; i < resolution; ++i) {
        const double y = -(2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(resolution) - 1.0) * tan_half;
        for (int64_t j = 0; j < resolution; ++j) {
            const double x = (2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(resolution) - 1.0) * tan_half;
            const Eigen::Vector3d d = (rot * Eigen::Vector3d(x, y, -1.0)).normalized();
            acc[i][j][0] = d.x();
            acc[i][j][1] = d.y();
            acc[i][j][2] = d.z();
        }
    }
    const Eigen::Vector3d p = c2w.block<3, 1>(0, 3);
    auto origin = torch::tensor({p.x(), p.y(), p.z()}, torch::kFloat64);
    RayBatch rays;
    rays.directions = dirs.to(dtype);
    rays.origins = origin.expand({resolution, resolution, 3}).contiguous().to(dtype);
    rays.near = near;
    rays.far = far;
    return rays;
}

} // namespace posefree
