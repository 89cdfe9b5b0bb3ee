// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/superres.hpp"
#include "posefree/triplane.hpp"

#include <torch/nn.h>

#include <span>
#include <vector>

namespace posefree {

struct PipelineConfig {
    GeneratorConfig generator;
    RenderConfig render;
    int64_t final_resolution = 128;
    int64_t superres_hidden = 32;

    void validate() const;
};

/// Images generated for one batch of (z, c).
struct Synthesized {
    RenderOutput rendered;
    ImagePair images;
};

/// G: z, c -> I. Owns the tri-plane generator and the super-resolution
/// module; this is the parameter set the EMA tracks.
class GeneratorPipelineImpl : public torch::nn::Module {
public:
    GeneratorPipelineImpl(const PipelineConfig& cfg, std::uint64_t seed);

    /// z: [B, n_z], poses.size() == B.
    Synthesized forward(const torch::Tensor& z, std::span<const CameraPose> poses, at::Generator* jitter = nullptr);

    /// Low-resolution render only.
    RenderOutput render(const torch::Tensor& z, std::span<const CameraPose> poses, at::Generator* jitter = nullptr);

    /// Standard-normal latents [n, n_z].
    torch::Tensor sample_latents(int64_t n, at::Generator& gen) const;

    const PipelineConfig& config() const { return cfg_; }

    /// Evaluation renders use bin midpoints; training renders jitter.
    void set_stratified(bool on) { cfg_.render.stratified = on; }

    TriPlaneGenerator triplane{nullptr};
    SuperResolution superres{nullptr};

private:
    PipelineConfig cfg_;
};
TORCH_MODULE(GeneratorPipeline);

/// Copies every parameter and buffer of `src` into `dst` (same architecture).
void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst);

} // namespace posefree
