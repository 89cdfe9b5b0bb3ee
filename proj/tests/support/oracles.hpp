// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations shared by the unit and acceptance tests.

#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace posefree::testing {

/// Central differences of a scalar-valued function, one coordinate at a time.
inline torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                      double eps = 1e-6) {
    auto base = x.detach().to(torch::kFloat64).clone();
    auto grad = torch::zeros_like(base);
    auto flat = base.view({-1});
    auto gflat = grad.view({-1});
    for (int64_t i = 0; i < flat.size(0); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + eps;
        const double up = f(base);
        flat[i] = orig - eps;
        const double down = f(base);
        flat[i] = orig;
        gflat[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

/// max |a - b| relative to the largest reference magnitude.
inline double relative_error(const torch::Tensor& analytic, const torch::Tensor& reference) {
    const double scale = std::max(reference.abs().max().item<double>(), 1e-12);
    return (analytic - reference).abs().max().item<double>() / scale;
}

/// Scalar InfoNCE written out term by term: -log(e^{s+/tau} / (e^{s+/tau} + sum e^{s-/tau})).
inline double brute_force_info_nce(const std::vector<double>& anchor, const std::vector<double>& positive,
                                   const std::vector<std::vector<double>>& negatives, double tau) {
    auto cosine = [](const std::vector<double>& u, const std::vector<double>& v) {
        double dot = 0.0;
        double nu = 0.0;
        double nv = 0.0;
        for (size_t i = 0; i < u.size(); ++i) {
            dot += u[i] * v[i];
            nu += u[i] * u[i];
            nv += v[i] * v[i];
        }
        return dot / (std::sqrt(nu) * std::sqrt(nv));
    };
    const double pos = std::exp(cosine(anchor, positive) / tau);
    double denom = pos;
    for (const auto& n : negatives) denom += std::exp(cosine(anchor, n) / tau);
    return -std::log(pos / denom);
}

/// O(n^2) k-NN manifold membership, straight from the definition.
inline double brute_force_coverage(const std::vector<std::vector<double>>& manifold,
                                   const std::vector<std::vector<double>>& queries, int k) {
    auto sq = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return s;
    };
    std::vector<double> radius(manifold.size());
    for (size_t i = 0; i < manifold.size(); ++i) {
        std::vector<double> d;
        for (size_t j = 0; j < manifold.size(); ++j)
            if (j != i) d.push_back(sq(manifold[i], manifold[j]));
        std::sort(d.begin(), d.end());
        radius[i] = d[static_cast<size_t>(k - 1)];
    }
    int inside = 0;
    for (const auto& q : queries) {
        bool hit = false;
        for (size_t i = 0; i < manifold.size() && !hit; ++i) hit = sq(q, manifold[i]) <= radius[i];
        inside += hit ? 1 : 0;
    }
    return static_cast<double>(inside) / static_cast<double>(queries.size());
}

/// Emission-absorption compositing of one ray with explicit products.
struct RayComposite {
    std::vector<double> value;
    double depth = 0.0;
    double opacity = 0.0;
    std::vector<double> weights;
};

inline RayComposite brute_force_composite(const std::vector<double>& sigma, const std::vector<std::vector<double>>& v,
                                          const std::vector<double>& t, const std::vector<double>& background,
                                          double last_delta, double empty_depth) {
    RayComposite out;
    out.value.assign(background.size(), 0.0);
    double transmittance = 1.0;
    double weighted_t = 0.0;
    for (size_t i = 0; i < sigma.size(); ++i) {
        const double delta = i + 1 < sigma.size() ? t[i + 1] - t[i] : last_delta;
        const double alpha = 1.0 - std::exp(-sigma[i] * delta);
        const double w = transmittance * alpha;
        out.weights.push_back(w);
        for (size_t c = 0; c < background.size(); ++c) out.value[c] += w * v[i][c];
        weighted_t += w * t[i];
        out.opacity += w;
        transmittance *= 1.0 - alpha;
    }
    for (size_t c = 0; c < background.size(); ++c) out.value[c] += (1.0 - out.opacity) * background[c];
    out.depth = out.opacity > 1e-6 ? weighted_t / out.opacity : empty_depth;
    return out;
}

/// Distance from `origin` along unit `dir` to the first hit of a sphere at the origin; -1 on a miss.
inline double ray_sphere_hit(const double origin[3], const double dir[3], double radius) {
    double b = 0.0;
    double c = -radius * radius;
    for (int i = 0; i < 3; ++i) {
        b += origin[i] * dir[i];
        c += origin[i] * origin[i];
    }
    const double disc = b * b - c;
    if (disc < 0.0) return -1.0;
    return -b - std::sqrt(disc);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("posefree_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace posefree::testing
