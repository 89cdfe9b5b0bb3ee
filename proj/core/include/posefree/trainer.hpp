// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "posefree/config.hpp"
#include "posefree/dataset.hpp"
#include "posefree/discriminator.hpp"
#include "posefree/objectives.hpp"
#include "posefree/pipeline.hpp"

#include <torch/optim/adam.h>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace posefree {

/// One line of metrics.jsonl. Terms a variant does not have are null.
struct StepMetrics {
    int64_t step = 0;
    double loss_d = 0.0;
    double loss_g = 0.0;
    std::optional<double> r1;
    std::optional<double> pose_loss;
    std::optional<double> info_nce;
    double real_logit_mean = 0.0;
    double fake_logit_mean = 0.0;

    std::string to_json() const;
};

/// Checkpoint format tag; loading any other tag is refused.
inline constexpr const char* kCheckpointVersion = "posefree-ckpt-v1";

/// Synthetic dataset settings implied by a run config (final resolution, prior, background).
SyntheticDatasetConfig synthetic_dataset_config(const RunConfig& cfg);
/// The run's real images: rendered synthetic data or an image folder.
Dataset load_dataset(const RunConfig& cfg);

/// EMA update: ema <- decay * ema + (1 - decay) * current; buffers are copied.
void update_ema(torch::nn::Module& ema, const torch::nn::Module& current, double decay);

/// Fakes of one step. `contrast` is set for embedding variants and then
/// `fakes()` refers to its anchors.
struct FakeSet {
    FakeBatch plain;
    std::optional<ContrastBatch> contrast;

    const FakeBatch& fakes() const { return contrast ? contrast->anchors : plain; }
    FakeSet detached() const;
};

/// Alternating D/G optimization. Every random draw of step t comes from a
/// stream derived from (seed, purpose, t), so the run state is the
/// parameters, the optimizer moments and the step counter.
class Trainer {
public:
    Trainer(const RunConfig& cfg, TrainingImages images);

    /// One D update followed by one G update and the EMA update.
    StepMetrics step();

    /// Building blocks of step(), exposed for tests.
    RealBatch real_batch(int64_t step) const;
    FakeSet generate(int64_t step);
    LossBreakdown discriminator_step(const RealBatch& real, const FakeSet& fakes, int64_t step);
    LossBreakdown generator_step(const FakeSet& fakes);

    int64_t current_step() const { return step_; }
    const RunConfig& config() const { return cfg_; }
    GeneratorPipeline& generator() { return gen_; }
    GeneratorPipeline& ema() { return ema_; }
    Discriminator& discriminator() { return disc_; }

    /// Where the offending batch is written when a loss turns non-finite.
    void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }

    void save_checkpoint(const std::filesystem::path& path) const;
    /// Restores parameters, optimizer moments and the step counter. Refuses
    /// a different format version or discriminator variant.
    void load_checkpoint(const std::filesystem::path& path);

private:
    [[noreturn]] void abort_non_finite(const std::string& which, const RealBatch& real, const FakeSet& fakes) const;

    RunConfig cfg_;
    TrainingImages images_;
    LossWeights weights_;
    PoseDistribution prior_;
    GeneratorPipeline gen_{nullptr};
    GeneratorPipeline ema_{nullptr};
    Discriminator disc_{nullptr};
    std::unique_ptr<torch::optim::Adam> opt_g_;
    std::unique_ptr<torch::optim::Adam> opt_d_;
    int64_t step_ = 0;
    std::filesystem::path dump_dir_ = ".";
};

/// Models restored from a checkpoint for rendering and evaluation.
struct LoadedModels {
    RunConfig config;
    int64_t step = 0;
    GeneratorPipeline generator{nullptr};
    GeneratorPipeline ema{nullptr};
    Discriminator discriminator{nullptr};
};

/// Throws ConfigError on unreadable files or version mismatch.
LoadedModels load_models(const std::filesystem::path& path);

} // namespace posefree
