// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/pipeline.hpp"

#include "posefree/errors.hpp"

#include <torch/torch.h>

namespace posefree {

void PipelineConfig::validate() const {
    generator.validate();
    render.validate();
    upsampling_factor(render.feature_resolution, final_resolution);
    if (superres_hidden < 1) throw ConfigError("superres hidden width must be >= 1");
}

GeneratorPipelineImpl::GeneratorPipelineImpl(const PipelineConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    triplane = register_module("triplane", TriPlaneGenerator(cfg_.generator, seed));
    superres = register_module(
        "superres", SuperResolution(cfg_.generator.feature_channels, cfg_.superres_hidden,
                                    upsampling_factor(cfg_.render.feature_resolution, cfg_.final_resolution), seed));
}

RenderOutput GeneratorPipelineImpl::render(const torch::Tensor& z, std::span<const CameraPose> poses,
                                           at::Generator* jitter) {
    if (z.size(0) != static_cast<int64_t>(poses.size())) {
        throw ContractViolation("generator: latent batch and pose count differ");
    }
    const auto field = triplane->field(z);
    return posefree::render(field, poses, cfg_.render, jitter, z.scalar_type());
}

Synthesized GeneratorPipelineImpl::forward(const torch::Tensor& z, std::span<const CameraPose> poses,
                                           at::Generator* jitter) {
    Synthesized out;
    out.rendered = render(z, poses, jitter);
    out.images = superresolve(superres, out.rendered, cfg_.final_resolution);
    return out;
}

torch::Tensor GeneratorPipelineImpl::sample_latents(int64_t n, at::Generator& gen) const {
    const auto dtype = triplane->mapping->fc1->weight.scalar_type();
    return torch::randn({n, cfg_.generator.latent_dim}, gen, torch::TensorOptions().dtype(dtype));
}

void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst) {
    torch::NoGradGuard no_grad;
    auto sp = src.named_parameters(true);
    auto dp = dst.named_parameters(true);
    TORCH_CHECK(sp.size() == dp.size(), "copy_parameters: architectures differ");
    for (const auto& item : sp) {
        auto* target = dp.find(item.key());
        TORCH_CHECK(target != nullptr, "copy_parameters: missing parameter ", item.key());
        target->copy_(item.value());
    }
    auto sb = src.named_buffers(true);
    auto db = dst.named_buffers(true);
    for (const auto& item : sb) {
        auto* target = db.find(item.key());
        TORCH_CHECK(target != nullptr, "copy_parameters: missing buffer ", item.key());
        target->copy_(item.value());
    }
}

} // namespace posefree
