// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/trainer.hpp"

#include "posefree/errors.hpp"

#include <nlohmann/json.hpp>
#include <torch/serialize.h>
#include <torch/torch.h>

#include <cmath>

namespace posefree {

namespace fs = std::filesystem;

std::string StepMetrics::to_json() const {
    using nlohmann::json;
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["step"] = step;
    j["loss_D"] = loss_d;
    j["loss_G"] = loss_g;
    j["r1"] = opt(r1);
    j["pose_loss"] = opt(pose_loss);
    j["info_nce"] = opt(info_nce);
    j["real_logit_mean"] = real_logit_mean;
    j["fake_logit_mean"] = fake_logit_mean;
    return j.dump();
}

SyntheticDatasetConfig synthetic_dataset_config(const RunConfig& cfg) {
    SyntheticDatasetConfig s;
    s.n_scenes = cfg.data.scenes;
    s.views_per_scene = cfg.data.views;
    s.prior = cfg.pose_prior();
    s.seed = cfg.data.seed;
    s.resolution = cfg.model.final_resolution;
    s.samples_per_ray = cfg.data.render_samples;
    s.background = cfg.background_rgb();
    return s;
}

Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.data.source == "folder") {
        if (is_synthetic_dataset_dir(cfg.data.path)) return load_synthetic_dataset(cfg.data.path);
        return load_image_folder(cfg.data.path, cfg.model.final_resolution);
    }
    return generate_synthetic_dataset(synthetic_dataset_config(cfg));
}

void update_ema(torch::nn::Module& ema, const torch::nn::Module& current, double decay) {
    torch::NoGradGuard no_grad;
    auto target = ema.named_parameters(true);
    for (const auto& item : current.named_parameters(true)) {
        auto* t = target.find(item.key());
        TORCH_CHECK(t != nullptr, "update_ema: missing parameter ", item.key());
        t->mul_(decay).add_(item.value(), 1.0 - decay);
    }
    auto buffers = ema.named_buffers(true);
    for (const auto& item : current.named_buffers(true)) {
        auto* t = buffers.find(item.key());
        TORCH_CHECK(t != nullptr, "update_ema: missing buffer ", item.key());
        t->copy_(item.value());
    }
}

FakeSet FakeSet::detached() const {
    FakeSet out;
    if (contrast) {
        out.contrast = contrast->detached();
    } else {
        out.plain = plain.detached();
    }
    return out;
}

namespace {

void set_requires_grad(torch::nn::Module& m, bool on) {
    for (auto& p : m.parameters()) p.set_requires_grad(on);
}

torch::optim::AdamOptions adam_options(double lr, const TrainConfig& t) {
    return torch::optim::AdamOptions(lr).betas({t.beta1, t.beta2}).eps(1e-8);
}

at::Generator stream(std::uint64_t seed, std::string_view tag, int64_t step) {
    return make_torch_generator(derive_seed(seed, tag, static_cast<std::uint64_t>(step)));
}

} // namespace

Trainer::Trainer(const RunConfig& cfg, TrainingImages images)
    : cfg_(cfg), images_(std::move(images)), weights_(cfg.loss), prior_(cfg.pose_prior()) {
    cfg_.validate();
    if (images_.resolution() != cfg_.model.final_resolution) {
        throw ConfigError("training images are " + std::to_string(images_.resolution()) +
                          " px but model.final_resolution is " + std::to_string(cfg_.model.final_resolution));
    }
    const auto seed = cfg_.train.seed;
    gen_ = GeneratorPipeline(cfg_.pipeline_config(), seed);
    ema_ = GeneratorPipeline(cfg_.pipeline_config(), seed);
    copy_parameters(*gen_, *ema_);
    set_requires_grad(*ema_, false);
    ema_->set_stratified(false);
    disc_ = Discriminator(cfg_.discriminator_config(), seed);
    opt_g_ = std::make_unique<torch::optim::Adam>(gen_->parameters(), adam_options(cfg_.train.lr_g, cfg_.train));
    opt_d_ = std::make_unique<torch::optim::Adam>(disc_->parameters(), adam_options(cfg_.train.lr_d, cfg_.train));
}

RealBatch Trainer::real_batch(int64_t step) const {
    Rng rng(cfg_.train.seed, "step.real", static_cast<std::uint64_t>(step));
    RealBatch real;
    real.images = real_image_pair(images_.sample(cfg_.train.batch_size, rng, cfg_.train.flip),
                                  cfg_.model.feature_resolution);
    if (disc_->variant().conditioned()) {
        // No pose labels exist for real images: condition on draws from the prior.
        Rng cond_rng(cfg_.train.seed, "step.real_cond", static_cast<std::uint64_t>(step));
        std::vector<CameraPose> poses;
        for (int64_t i = 0; i < cfg_.train.batch_size; ++i) poses.push_back(sample_pose(prior_, cond_rng));
        real.condition = poses_to_tensor(poses);
    }
    return real;
}

FakeSet Trainer::generate(int64_t step) {
    const auto seed = cfg_.train.seed;
    const auto n = cfg_.train.batch_size;
    Rng pose_rng(seed, "step.fake", static_cast<std::uint64_t>(step));
    auto poses = sample_distinct_poses(prior_, n, pose_rng);
    auto latent_gen = stream(seed, "step.latent", step);
    auto jitter = stream(seed, "step.jitter", step);
    auto anchors = generate_fakes(gen_, poses, gen_->sample_latents(n, latent_gen), &jitter);

    FakeSet out;
    if (!disc_->variant().has_embedding_head()) {
        out.plain = std::move(anchors);
        return out;
    }
    // Positives come from their own streams so the anchors match the
    // single-loss variants draw for draw.
    auto pos_latent_gen = stream(seed, "step.latent_pos", step);
    auto pos_jitter = stream(seed, "step.jitter_pos", step);
    ContrastBatch contrast;
    contrast.positives = generate_fakes(gen_, poses, gen_->sample_latents(n, pos_latent_gen), &pos_jitter);
    contrast.anchors = std::move(anchors);
    contrast.negatives = in_batch_negatives(n);
    out.contrast = std::move(contrast);
    return out;
}

LossBreakdown Trainer::discriminator_step(const RealBatch& real, const FakeSet& fakes, int64_t step) {
    set_requires_grad(*disc_, true);
    const auto detached = fakes.detached();
    const R1Schedule r1{step % cfg_.train.r1_every == 0, static_cast<double>(cfg_.train.r1_every)};
    auto loss = discriminator_loss(disc_, weights_, real, detached.fakes(),
                                   detached.contrast ? &*detached.contrast : nullptr, r1);
    if (!std::isfinite(loss.total.item<double>())) abort_non_finite("loss_D", real, fakes);
    opt_d_->zero_grad();
    loss.total.backward();
    opt_d_->step();
    return loss;
}

LossBreakdown Trainer::generator_step(const FakeSet& fakes) {
    set_requires_grad(*disc_, false);
    auto loss = generator_loss(disc_, weights_, fakes.fakes(), fakes.contrast ? &*fakes.contrast : nullptr);
    if (!std::isfinite(loss.total.item<double>())) {
        set_requires_grad(*disc_, true);
        abort_non_finite("loss_G", RealBatch{}, fakes);
    }
    opt_g_->zero_grad();
    loss.total.backward();
    opt_g_->step();
    set_requires_grad(*disc_, true);
    return loss;
}

StepMetrics Trainer::step() {
    const auto real = real_batch(step_);
    const auto fakes = generate(step_);
    const auto d = discriminator_step(real, fakes, step_);
    const auto g = generator_step(fakes);
    update_ema(*ema_, *gen_, cfg_.train.ema_decay);

    StepMetrics m;
    m.step = step_;
    m.loss_d = d.total.item<double>();
    m.loss_g = g.total.item<double>();
    m.r1 = d.r1;
    m.pose_loss = d.pose;
    m.info_nce = d.info_nce;
    m.real_logit_mean = d.real_logit_mean.value_or(0.0);
    m.fake_logit_mean = d.fake_logit_mean;
    ++step_;
    return m;
}

void Trainer::abort_non_finite(const std::string& which, const RealBatch& real, const FakeSet& fakes) const {
    const auto path = dump_dir_ / ("nonfinite_step" + std::to_string(step_) + ".pt");
    std::string where = path.string();
    try {
        fs::create_directories(dump_dir_);
        torch::serialize::OutputArchive archive;
        if (real.images.high.defined()) {
            archive.write("real.high", real.images.high.detach());
            archive.write("real.low", real.images.low_upsampled.detach());
        }
        const auto& f = fakes.fakes();
        archive.write("fake.high", f.images().high.detach());
        archive.write("fake.low", f.images().low_upsampled.detach());
        archive.write("fake.poses", f.pose_vectors().detach());
        archive.write("fake.latents", f.latents.detach());
        archive.save_to(path.string());
    } catch (const std::exception& e) {
        where = std::string("<dump failed: ") + e.what() + ">";
    }
    throw NumericalError(which + " is not finite at step " + std::to_string(step_) + "; batch dumped to " + where);
}

namespace {

template <typename Module>
void write_module(torch::serialize::OutputArchive& archive, const std::string& key, const Module& m) {
    torch::serialize::OutputArchive sub;
    m->save(sub);
    archive.write(key, sub);
}

template <typename Module>
void read_module(torch::serialize::InputArchive& archive, const std::string& key, Module& m) {
    torch::serialize::InputArchive sub;
    archive.read(key, sub);
    m->load(sub);
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
    c10::IValue v;
    archive.read(key, v);
    return v.toStringRef();
}

torch::serialize::InputArchive open_checkpoint(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw ConfigError("checkpoint " + path.string() + " does not exist");
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw ConfigError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    std::string version;
    try {
        version = read_string(archive, "meta.version");
    } catch (const c10::Error&) {
        throw ConfigError("checkpoint " + path.string() + " has no version tag");
    }
    if (version != kCheckpointVersion) {
        throw ConfigError("checkpoint version '" + version + "' is not supported (expected '" + kCheckpointVersion +
                          "')");
    }
    return archive;
}

} // namespace

void Trainer::save_checkpoint(const fs::path& path) const {
    torch::serialize::OutputArchive archive;
    archive.write("meta.version", c10::IValue(std::string(kCheckpointVersion)));
    archive.write("meta.step", c10::IValue(step_));
    archive.write("meta.variant", c10::IValue(DiscVariant::kind_name(disc_->variant().kind)));
    archive.write("meta.config", c10::IValue(cfg_.to_text()));
    write_module(archive, "generator", gen_);
    write_module(archive, "ema", ema_);
    write_module(archive, "discriminator", disc_);
    torch::serialize::OutputArchive og;
    opt_g_->save(og);
    archive.write("optim_g", og);
    torch::serialize::OutputArchive od;
    opt_d_->save(od);
    archive.write("optim_d", od);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    archive.save_to(path.string());
}

void Trainer::load_checkpoint(const fs::path& path) {
    auto archive = open_checkpoint(path);
    const auto variant = read_string(archive, "meta.variant");
    const auto mine = DiscVariant::kind_name(disc_->variant().kind);
    if (variant != mine) {
        throw ConfigError("checkpoint holds a '" + variant + "' discriminator; this run is '" + mine + "'");
    }
    const auto stored = RunConfig::parse(read_string(archive, "meta.config"), path.string());
    if (stored.variant() != disc_->variant()) {
        throw ConfigError("checkpoint embedding dimension differs from this run");
    }
    read_module(archive, "generator", gen_);
    read_module(archive, "ema", ema_);
    read_module(archive, "discriminator", disc_);
    torch::serialize::InputArchive og;
    archive.read("optim_g", og);
    opt_g_->load(og);
    torch::serialize::InputArchive od;
    archive.read("optim_d", od);
    opt_d_->load(od);
    c10::IValue step;
    archive.read("meta.step", step);
    step_ = step.toInt();
}

LoadedModels load_models(const fs::path& path) {
    auto archive = open_checkpoint(path);
    LoadedModels out;
    out.config = RunConfig::parse(read_string(archive, "meta.config"), path.string() + ":config");
    c10::IValue step;
    archive.read("meta.step", step);
    out.step = step.toInt();
    const auto seed = out.config.train.seed;
    out.generator = GeneratorPipeline(out.config.pipeline_config(), seed);
    out.ema = GeneratorPipeline(out.config.pipeline_config(), seed);
    out.discriminator = Discriminator(out.config.discriminator_config(), seed);
    read_module(archive, "generator", out.generator);
    read_module(archive, "ema", out.ema);
    read_module(archive, "discriminator", out.discriminator);
    for (auto* g : {&out.generator, &out.ema}) {
        (*g)->set_stratified(false);
        for (auto& p : (*g)->parameters()) p.set_requires_grad(false);
    }
    for (auto& p : out.discriminator->parameters()) p.set_requires_grad(false);
    return out;
}

} // namespace posefree
