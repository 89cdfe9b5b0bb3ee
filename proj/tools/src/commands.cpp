// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree_tools/commands.hpp"

#include "posefree/config.hpp"
#include "posefree/dataset.hpp"
#include "posefree/errors.hpp"
#include "posefree/image_io.hpp"
#include "posefree/metrics.hpp"
#include "posefree/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>

namespace posefree::cli {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;
using nlohmann::json;

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUserError;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUserError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

RunConfig load_run_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
    RunConfig cfg = path ? RunConfig::load(*path) : RunConfig{};
    for (const auto& o : overrides) cfg.apply_override(o);
    cfg.validate();
    return cfg;
}

bool non_empty_dir(const fs::path& p) {
    return fs::is_directory(p) && fs::directory_iterator(p) != fs::directory_iterator();
}

} // namespace

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto cfg = load_run_config(args.config, args.overrides);
        fs::create_directories(args.out / "ckpt");
        std::ofstream(args.out / "config.snapshot") << cfg.to_text();

        Trainer trainer(cfg, TrainingImages(load_dataset(cfg)));
        trainer.set_dump_dir(args.out);
        std::ofstream metrics(args.out / "metrics.jsonl");
        if (!metrics) throw ConfigError("cannot write " + (args.out / "metrics.jsonl").string());

        const auto start = std::chrono::steady_clock::now();
        for (int64_t s = 0; s < cfg.train.steps; ++s) {
            const auto m = trainer.step();
            metrics << m.to_json() << '\n';
            metrics.flush();
            if (args.log_every > 0 && (s % args.log_every == 0 || s + 1 == cfg.train.steps)) {
                const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
                out << "step " << s << " loss_D " << m.loss_d << " loss_G " << m.loss_g << " (" << elapsed.count()
                    << " s)" << std::endl;
            }
            if (cfg.train.checkpoint_every > 0 && (s + 1) % cfg.train.checkpoint_every == 0) {
                trainer.save_checkpoint(args.out / "ckpt" / ("step_" + std::to_string(s + 1) + ".pt"));
            }
        }
        trainer.save_checkpoint(args.out / "ckpt" / "latest.pt");
        out << "wrote " << (args.out / "ckpt" / "latest.pt").string() << '\n';
        return kExitOk;
    });
}

std::pair<double, double> parse_yaw_range(const std::string& text) {
    const auto colon = text.find(':', text.empty() ? 0 : 1);
    if (colon == std::string::npos) throw ConfigError("yaw range must be lo:hi in degrees, got '" + text + "'");
    try {
        size_t used = 0;
        const double lo = std::stod(text.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("lo");
        const auto hi_text = text.substr(colon + 1);
        const double hi = std::stod(hi_text, &used);
        if (used != hi_text.size()) throw std::invalid_argument("hi");
        return {lo, hi};
    } catch (const std::logic_error&) {
        throw ConfigError("yaw range must be lo:hi in degrees, got '" + text + "'");
    }
}

namespace {

// Depth strip as a grey RGB image (near is white), resized to the colour strip's frame size.
torch::Tensor depth_row(const torch::Tensor& depth, int64_t frames, int64_t frame_res, double near, double far) {
    const auto h = depth.size(0);
    const auto per = depth.view({h, frames, h}).permute({1, 0, 2}).unsqueeze(1); // [frames, 1, h, h]
    auto up = F::interpolate(per.to(torch::kFloat32), F::InterpolateFuncOptions()
                                                          .size(std::vector<int64_t>{frame_res, frame_res})
                                                          .mode(torch::kNearest));
    const auto grey = 1.0 - 2.0 * ((up - near) / (far - near)).clamp(0.0, 1.0);
    return grey.expand({frames, 3, frame_res, frame_res})
        .permute({1, 2, 0, 3})
        .reshape({3, frame_res, frames * frame_res});
}

} // namespace

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (args.steps < 1) throw ConfigError("--steps must be >= 1");
        if (args.count < 1) throw ConfigError("--count must be >= 1");
        auto models = load_models(args.checkpoint);
        auto& gen = models.ema;
        const auto prior = models.config.pose_prior();
        const auto base = prior.mean_pose();
        const auto offsets = sweep_offsets(args.yaw_lo_deg, args.yaw_hi_deg, args.steps);
        fs::create_directories(args.out);

        auto latent_gen = make_torch_generator(derive_seed(args.seed, "sweep.latents"));
        const auto& rcfg = gen->config().render;
        json meta;
        meta["checkpoint_step"] = models.step;
        meta["seed"] = args.seed;
        meta["yaw_offsets_deg"] = offsets;
        json files = json::array();
        for (int64_t i = 0; i < args.count; ++i) {
            const auto z = gen->sample_latents(1, latent_gen);
            const auto strip = pose_sweep(gen, z, base, offsets);
            meta["yaws_rad"] = strip.yaws;
            const auto res = gen->config().final_resolution;
            const auto image = torch::cat({strip.rgb, depth_row(strip.depth, args.steps, res, rcfg.near, rcfg.far)}, 1);
            const auto name = "sweep_" + std::to_string(i) + ".png";
            write_rgb_png(image, args.out / name);
            files.push_back(name);
        }
        meta["files"] = files;
        std::ofstream(args.out / "sweep.json") << meta.dump(2) << '\n';
        out << "wrote " << args.count << " sweep strip(s) of " << args.steps << " frames to " << args.out.string()
            << '\n';
        return kExitOk;
    });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto models = load_models(args.checkpoint);
        const auto& cfg = models.config;

        Dataset data;
        if (args.data.empty()) {
            data = generate_synthetic_dataset(synthetic_dataset_config(cfg));
        } else if (is_synthetic_dataset_dir(args.data)) {
            data = load_synthetic_dataset(args.data);
        } else {
            data = load_image_folder(args.data, cfg.model.final_resolution);
        }

        EvalRequest req;
        req.metrics = args.metrics.empty() ? cfg.eval.metrics : args.metrics;
        req.samples = args.samples.value_or(cfg.eval.samples);
        req.k = cfg.eval.k;
        req.n_poses = cfg.eval.n_poses;
        req.n_latents = cfg.eval.n_latents;
        req.feature_dim = cfg.eval.feature_dim;
        req.seed = args.seed;

        const auto report = evaluate(models.ema, models.discriminator, cfg.pose_prior(), data, req);
        for (const auto& [name, why] : report.refused) err << "notice: " << name << " refused: " << why << '\n';
        if (report.refused.size() == req.metrics.size()) throw ConfigError("none of the requested metrics apply");

        if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
        std::ofstream file(args.out);
        if (!file) throw ConfigError("cannot write " + args.out.string());
        file << report.to_json() << '\n';
        out << report.summary() << '\n';
        return kExitOk;
    });
}

int cmd_make_data(const MakeDataArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto cfg = load_run_config(args.config, args.overrides);
        if (args.scenes) cfg.data.scenes = *args.scenes;
        if (args.views) cfg.data.views = *args.views;
        cfg.validate();
        if (non_empty_dir(args.out)) {
            if (!args.force) throw ConfigError(args.out.string() + " exists and is not empty (use --force)");
            for (const char* entry : {"images", "depth", "poses.csv", "manifest.json"}) fs::remove_all(args.out / entry);
        }
        const auto scfg = synthetic_dataset_config(cfg);
        const auto ds = generate_synthetic_dataset(scfg);
        save_synthetic_dataset(ds, scfg, args.out);
        out << "wrote " << ds.size() << " records to " << args.out.string() << '\n';
        return kExitOk;
    });
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            if (!cur.empty()) items.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) items.push_back(cur);
    return items;
}

} // namespace

int run(int argc, char** argv) {
    CLI::App app{"Pose-free 3D-aware GAN training and evaluation"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train a generator/discriminator pair");
    train_cmd->add_option("--config", train.config, "Run configuration file")->required();
    train_cmd->add_option("--out", train.out, "Output directory")->required();
    train_cmd->add_option("--set", train.overrides, "Override section.key=value (repeatable)");
    train_cmd->add_option("--log-every", train.log_every, "Progress line interval (0: silent)");

    SweepArgs sweep;
    std::string yaw = "-40:40";
    auto* sweep_cmd = app.add_subcommand("sweep", "Render yaw sweeps with the EMA generator");
    sweep_cmd->add_option("--checkpoint", sweep.checkpoint, "Checkpoint file")->required();
    sweep_cmd->add_option("--out", sweep.out, "Output directory")->required();
    sweep_cmd->add_option("--yaw", yaw, "Yaw offsets lo:hi in degrees around the prior's center");
    sweep_cmd->add_option("--steps", sweep.steps, "Frames per strip");
    sweep_cmd->add_option("--count", sweep.count, "Number of latents");
    sweep_cmd->add_option("--seed", sweep.seed, "Latent seed");

    EvalArgs eval;
    std::string metric_list;
    auto* eval_cmd = app.add_subcommand("eval", "Compute the metric report of a checkpoint");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--data", eval.data, "Synthetic dataset directory or image folder");
    eval_cmd->add_option("--metrics", metric_list, "Comma-separated subset of fid,precision_recall,depth_fd,embedding");
    eval_cmd->add_option("--out", eval.out, "Report file")->required();
    eval_cmd->add_option("--seed", eval.seed, "Evaluation seed");
    eval_cmd->add_option("--samples", eval.samples, "Generated samples for image metrics");

    MakeDataArgs make;
    std::string make_config;
    int64_t scenes = 0;
    int64_t views = 0;
    auto* make_cmd = app.add_subcommand("make-data", "Render the synthetic multi-view dataset");
    make_cmd->add_option("--config", make_config, "Run configuration file");
    make_cmd->add_option("--out", make.out, "Output directory")->required();
    make_cmd->add_option("--set", make.overrides, "Override section.key=value (repeatable)");
    auto* scenes_opt = make_cmd->add_option("--scenes", scenes, "Number of scenes");
    auto* views_opt = make_cmd->add_option("--views", views, "Views per scene");
    make_cmd->add_flag("--force", make.force, "Replace an existing dataset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUserError;
    }

    if (train_cmd->parsed()) return cmd_train(train, std::cout, std::cerr);
    if (sweep_cmd->parsed()) {
        try {
            std::tie(sweep.yaw_lo_deg, sweep.yaw_hi_deg) = parse_yaw_range(yaw);
        } catch (const ConfigError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitUserError;
        }
        return cmd_sweep(sweep, std::cout, std::cerr);
    }
    if (eval_cmd->parsed()) {
        eval.metrics = split_list(metric_list);
        return cmd_eval(eval, std::cout, std::cerr);
    }
    if (!make_config.empty()) make.config = make_config;
    if (scenes_opt->count() > 0) make.scenes = scenes;
    if (views_opt->count() > 0) make.views = views;
    return cmd_make_data(make, std::cout, std::cerr);
}

} // namespace posefree::cli
