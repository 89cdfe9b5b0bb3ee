// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/metrics.hpp"
#include "posefree/objectives.hpp"
#include "posefree/pipeline.hpp"
#include "posefree/renderer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace posefree;

namespace {

PipelineConfig bench_pipeline(int64_t feature_res, int64_t samples) {
    PipelineConfig p;
    p.generator.latent_dim = 64;
    p.generator.style_dim = 64;
    p.generator.plane_resolution = 32;
    p.generator.plane_channels = 16;
    p.generator.decoder_hidden = 32;
    p.generator.feature_channels = 8;
    p.render.feature_resolution = feature_res;
    p.render.samples_per_ray = samples;
    p.final_resolution = feature_res * 2;
    p.superres_hidden = 16;
    return p;
}

void BM_Composite(benchmark::State& state) {
    const int64_t rays = state.range(0);
    const int64_t s = 96;
    const auto sigma = torch::rand({rays, s});
    const auto values = torch::rand({rays, s, 8});
    const auto t = torch::linspace(1.5, 3.9, s).expand({rays, s}).contiguous();
    const auto bg = torch::zeros({8});
    for (auto _ : state) benchmark::DoNotOptimize(composite(sigma, values, t, bg, 1e10, 3.9).value);
    state.SetItemsProcessed(state.iterations() * rays);
}
BENCHMARK(BM_Composite)->Arg(256)->Arg(1024)->Arg(4096);

void BM_GeneratorForward(benchmark::State& state) {
    const auto cfg = bench_pipeline(state.range(0), 32);
    GeneratorPipeline gen(cfg, 0);
    gen->set_stratified(false);
    auto lat = make_torch_generator(0);
    const auto z = gen->sample_latents(8, lat);
    const std::vector<CameraPose> poses(8, CameraPose{kPi / 2, kPi / 2, 2.7, 0.7});
    torch::NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(gen->forward(z, poses).images.high);
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_GeneratorForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_InfoNce(benchmark::State& state) {
    const int64_t n = state.range(0);
    const auto a = torch::randn({n, 24});
    const auto p = torch::randn({n, 24});
    const auto negs = torch::randn({n, 2 * (n - 1), 24});
    for (auto _ : state) benchmark::DoNotOptimize(info_nce(a, p, negs, 0.25));
}
BENCHMARK(BM_InfoNce)->Arg(8)->Arg(64);

void BM_Frechet(benchmark::State& state) {
    std::mt19937_64 eng(0);
    std::normal_distribution<double> normal;
    FeatureSet a{Eigen::MatrixXd::NullaryExpr(state.range(0), 16, [&] { return normal(eng); }), "bench"};
    FeatureSet b{Eigen::MatrixXd::NullaryExpr(state.range(0), 16, [&] { return normal(eng) + 0.1; }), "bench"};
    for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_Frechet)->Arg(256)->Arg(4096);

void BM_PrecisionRecall(benchmark::State& state) {
    std::mt19937_64 eng(1);
    std::normal_distribution<double> normal;
    FeatureSet a{Eigen::MatrixXd::NullaryExpr(state.range(0), 16, [&] { return normal(eng); }), "bench"};
    FeatureSet b{Eigen::MatrixXd::NullaryExpr(state.range(0), 16, [&] { return normal(eng); }), "bench"};
    for (auto _ : state) benchmark::DoNotOptimize(precision_recall(a, b, 3));
}
BENCHMARK(BM_PrecisionRecall)->Arg(256)->Arg(1024);

} // namespace

BENCHMARK_MAIN();
