// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include "posefree/errors.hpp"
#include "posefree/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace posefree;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(const std::string& variant) {
    RunConfig cfg;
    for (const char* kv : {"model.embed_dim=6", "model.latent_dim=8", "model.style_dim=8", "model.plane_resolution=8",
                           "model.plane_channels=4", "model.feature_channels=4", "model.decoder_hidden=8",
                           "model.feature_resolution=8", "model.final_resolution=16", "model.samples_per_ray=8",
                           "model.superres_hidden=4", "model.disc_channels=4", "model.disc_hidden=16",
                           "train.batch=4", "train.r1_every=2", "train.seed=11", "data.fov=0.7"})
        cfg.apply_override(kv);
    cfg.model.variant = variant;
    cfg.validate();
    return cfg;
}

// Real images with a clear signature: a bright disc on black.
torch::Tensor disc_images(int64_t n) {
    auto grid = torch::linspace(-1, 1, 16);
    auto r2 = grid.view({1, 16}).pow(2) + grid.view({16, 1}).pow(2);
    auto img = torch::where(r2 < 0.4, torch::ones_like(r2), -torch::ones_like(r2));
    return img.expand({n, 3, 16, 16}).clone();
}

std::vector<torch::Tensor> params_of(torch::nn::Module& m) {
    std::vector<torch::Tensor> out;
    for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
    return out;
}

bool bitwise_equal(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (!torch::equal(a[i], b[i])) return false;
    return true;
}

} // namespace

TEST(Trainer, RunsAreBitwiseReproducible) {
    for (const char* variant : {"pose_conditioned", "prnerf", "contranerf", "pr_contranerf"}) {
        SCOPED_TRACE(variant);
        Trainer a(tiny_config(variant), TrainingImages(disc_images(6)));
        Trainer b(tiny_config(variant), TrainingImages(disc_images(6)));
        for (int i = 0; i < 3; ++i) EXPECT_EQ(a.step().to_json(), b.step().to_json());
        EXPECT_TRUE(bitwise_equal(params_of(*a.generator()), params_of(*b.generator())));
        EXPECT_TRUE(bitwise_equal(params_of(*a.discriminator()), params_of(*b.discriminator())));
    }
}

TEST(Trainer, MetricsCarryOnlyTheVariantsTerms) {
    Trainer pr(tiny_config("prnerf"), TrainingImages(disc_images(4)));
    const auto m0 = pr.step();
    EXPECT_TRUE(m0.pose_loss.has_value());
    EXPECT_FALSE(m0.info_nce.has_value());
    EXPECT_TRUE(m0.r1.has_value()); // step 0 is an R1 step
    EXPECT_FALSE(pr.step().r1.has_value());

    Trainer cn(tiny_config("contranerf"), TrainingImages(disc_images(4)));
    const auto c0 = cn.step();
    EXPECT_FALSE(c0.pose_loss.has_value());
    EXPECT_TRUE(c0.info_nce.has_value());
    EXPECT_NE(c0.to_json().find("\"pose_loss\":null"), std::string::npos);
}

TEST(Trainer, PositivesShareAnchorPosesButNotLatents) {
    Trainer t(tiny_config("contranerf"), TrainingImages(disc_images(4)));
    const auto fakes = t.generate(0);
    ASSERT_TRUE(fakes.contrast.has_value());
    EXPECT_EQ(fakes.contrast->anchors.poses, fakes.contrast->positives.poses);
    EXPECT_FALSE(torch::equal(fakes.contrast->anchors.latents, fakes.contrast->positives.latents));
    EXPECT_EQ(fakes.contrast->negatives_per_anchor(), 6);
}

TEST(Trainer, AnchorsMatchTheSingleLossVariantDrawForDraw) {
    Trainer plain(tiny_config("prnerf"), TrainingImages(disc_images(4)));
    Trainer contrast(tiny_config("pr_contranerf"), TrainingImages(disc_images(4)));
    const auto a = plain.generate(3);
    const auto b = contrast.generate(3);
    EXPECT_EQ(a.fakes().poses, b.fakes().poses);
    EXPECT_TRUE(torch::equal(a.fakes().latents, b.fakes().latents));
    EXPECT_TRUE(torch::equal(a.fakes().images().high, b.fakes().images().high));
}

TEST(Trainer, DiscriminatorStepLeavesTheGeneratorAlone) {
    Trainer t(tiny_config("prnerf"), TrainingImages(disc_images(4)));
    const auto g0 = params_of(*t.generator());
    const auto d0 = params_of(*t.discriminator());
    t.discriminator_step(t.real_batch(0), t.generate(0), 0);
    EXPECT_TRUE(bitwise_equal(g0, params_of(*t.generator())));
    EXPECT_FALSE(bitwise_equal(d0, params_of(*t.discriminator())));
}

TEST(Trainer, GeneratorStepLeavesTheDiscriminatorAlone) {
    Trainer t(tiny_config("contranerf"), TrainingImages(disc_images(4)));
    const auto g0 = params_of(*t.generator());
    const auto d0 = params_of(*t.discriminator());
    t.generator_step(t.generate(0));
    EXPECT_TRUE(bitwise_equal(d0, params_of(*t.discriminator())));
    EXPECT_FALSE(bitwise_equal(g0, params_of(*t.generator())));
    for (const auto& p : t.discriminator()->parameters()) EXPECT_TRUE(p.requires_grad());
}

TEST(Trainer, EmaDecaysGeometrically) {
    auto a = torch::nn::Linear(3, 2);
    auto b = torch::nn::Linear(3, 2);
    torch::NoGradGuard guard;
    const auto e0 = a->weight.detach().clone();
    const auto target = b->weight.detach().clone();
    const double decay = 0.9;
    for (int k = 0; k < 5; ++k) update_ema(*a, *b, decay);
    const double w = std::pow(decay, 5);
    EXPECT_TRUE(torch::allclose(a->weight, w * e0 + (1 - w) * target, 1e-6, 1e-6));
    update_ema(*a, *b, 0.0);
    EXPECT_TRUE(torch::equal(a->weight, b->weight));
}

TEST(Trainer, EmaStartsAsACopy) {
    Trainer t(tiny_config("prnerf"), TrainingImages(disc_images(4)));
    EXPECT_TRUE(bitwise_equal(params_of(*t.generator()), params_of(*t.ema())));
    for (const auto& p : t.ema()->parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(Trainer, ResumedRunMatchesAnUninterruptedOne) {
    const auto dir = posefree::testing::scratch_dir("trainer_resume");
    const auto cfg = tiny_config("pr_contranerf");
    Trainer straight(cfg, TrainingImages(disc_images(5)));
    std::vector<std::string> expected;
    for (int i = 0; i < 4; ++i) expected.push_back(straight.step().to_json());

    Trainer first(cfg, TrainingImages(disc_images(5)));
    first.step();
    first.step();
    first.save_checkpoint(dir / "mid.pt");
    Trainer resumed(cfg, TrainingImages(disc_images(5)));
    resumed.load_checkpoint(dir / "mid.pt");
    EXPECT_EQ(resumed.current_step(), 2);
    EXPECT_EQ(resumed.step().to_json(), expected[2]);
    EXPECT_EQ(resumed.step().to_json(), expected[3]);
    EXPECT_TRUE(bitwise_equal(params_of(*straight.ema()), params_of(*resumed.ema())));
}

TEST(Trainer, LoadedModelsRenderLikeTheTrainer) {
    const auto dir = posefree::testing::scratch_dir("trainer_load");
    Trainer t(tiny_config("contranerf"), TrainingImages(disc_images(4)));
    t.step();
    t.ema()->set_stratified(false);
    t.save_checkpoint(dir / "c.pt");
    auto loaded = load_models(dir / "c.pt");
    EXPECT_EQ(loaded.step, 1);
    EXPECT_EQ(loaded.config.to_text(), t.config().to_text());
    const std::vector<CameraPose> poses{{1.5, 1.6, 2.7, 0.7}};
    auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
    const auto z = t.ema()->sample_latents(1, gen);
    torch::NoGradGuard guard;
    EXPECT_TRUE(torch::equal(t.ema()->forward(z, poses).images.high, loaded.ema->forward(z, poses).images.high));
}

TEST(Trainer, CheckpointsOfAnotherVariantOrVersionAreRefused) {
    const auto dir = posefree::testing::scratch_dir("trainer_refuse");
    Trainer pr(tiny_config("prnerf"), TrainingImages(disc_images(4)));
    pr.save_checkpoint(dir / "pr.pt");
    Trainer cn(tiny_config("contranerf"), TrainingImages(disc_images(4)));
    EXPECT_THROW(cn.load_checkpoint(dir / "pr.pt"), ConfigError);

    torch::serialize::OutputArchive archive;
    archive.write("meta.version", c10::IValue(std::string("posefree-ckpt-v0")));
    archive.save_to((dir / "old.pt").string());
    EXPECT_THROW(pr.load_checkpoint(dir / "old.pt"), ConfigError);
    EXPECT_THROW(load_models(dir / "old.pt"), ConfigError);
    EXPECT_THROW(load_models(dir / "missing.pt"), ConfigError);
}

TEST(Trainer, WrongImageResolutionIsRefused) {
    EXPECT_THROW(Trainer(tiny_config("prnerf"), TrainingImages(torch::zeros({4, 3, 8, 8}))), ConfigError);
}

TEST(Trainer, NonFiniteLossAbortsWithADump) {
    const auto dir = posefree::testing::scratch_dir("trainer_nan");
    auto images = disc_images(4);
    images[0][0][0][0] = std::nan("");
    auto cfg = tiny_config("prnerf");
    cfg.train.flip = false;
    Trainer t(cfg, TrainingImages(images.index({torch::indexing::Slice(0, 1)}).expand({4, 3, 16, 16}).clone()));
    t.set_dump_dir(dir);
    EXPECT_THROW(t.step(), NumericalError);
    EXPECT_TRUE(fs::exists(dir / "nonfinite_step0.pt"));
}

TEST(Trainer, DiscriminatorSeparatesRealFromFakeAfterFiftySteps) {
    auto cfg = tiny_config("prnerf");
    cfg.apply_override("data.scenes=8");
    cfg.apply_override("data.views=4");
    cfg.apply_override("data.render_samples=16");
    Trainer t(cfg, TrainingImages(load_dataset(cfg)));
    StepMetrics m;
    for (int i = 0; i < 50; ++i) m = t.step();
    EXPECT_GT(m.real_logit_mean, m.fake_logit_mean);
}
