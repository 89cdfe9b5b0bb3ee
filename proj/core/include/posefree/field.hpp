// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/types.h>

namespace posefree {

/// Radiance-field outputs at a set of query points.
struct PointDecode {
    torch::Tensor density;  ///< [B, K], >= 0
    torch::Tensor features; ///< [B, K, C], first three channels are RGB in [0, 1]
};

/// Anything the volume renderer can march through: the learned tri-plane
/// field or an analytic scene.
class RadianceField {
public:
    virtual ~RadianceField() = default;

    /// points: [B, K, 3] world coordinates, one batch row per rendered view.
    virtual PointDecode query(const torch::Tensor& points) const = 0;
    virtual int64_t feature_channels() const = 0;
};

} // namespace posefree
