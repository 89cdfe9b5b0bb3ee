// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/dataset.hpp"

#include "posefree/errors.hpp"
#include "posefree/image_io.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace posefree {

namespace fs = std::filesystem;
using nlohmann::json;

SyntheticScene SyntheticScene::random(Rng& rng, std::array<double, 3> background) {
    SyntheticScene scene;
    scene.background = background;
    const int count = 1 + static_cast<int>(rng.uniform(0.0, 5.0));
    for (int i = 0; i < std::min(count, 5); ++i) {
        Primitive p;
        for (int a = 0; a < 3; ++a) {
            p.radii[a] = rng.uniform(0.15, 0.4);
            p.center[a] = rng.uniform(-0.45, 0.45);
            p.rgb[a] = rng.uniform(0.15, 1.0);
        }
        scene.primitives.push_back(p);
    }
    return scene;
}

namespace {

// Density profile of one primitive as a function of normalized radius q.
torch::Tensor primitive_density(const Primitive& p, const torch::Tensor& points) {
    const auto opts = points.options();
    const auto c = torch::tensor({p.center[0], p.center[1], p.center[2]}, opts.dtype(torch::kFloat64)).to(opts);
    const auto r = torch::tensor({p.radii[0], p.radii[1], p.radii[2]}, opts.dtype(torch::kFloat64)).to(opts);
    const auto q = ((points - c) / r).pow(2).sum(-1).sqrt();
    const auto excess = (q - 1.0).clamp_min(0.0);
    auto falloff = torch::exp(-excess.pow(2) / (2.0 * kFalloffWidth * kFalloffWidth));
    falloff = torch::where(excess > 3.0 * kFalloffWidth, torch::zeros_like(falloff), falloff);
    return kSceneDensity * falloff;
}

} // namespace

torch::Tensor scene_density(const SyntheticScene& scene, const torch::Tensor& points) {
    auto total = torch::zeros(points.sizes().slice(0, points.dim() - 1), points.options());
    for (const auto& p : scene.primitives) total = total + primitive_density(p, points);
    return total;
}

SceneField::SceneField(std::vector<SyntheticScene> scenes) : scenes_(std::move(scenes)) {}

PointDecode SceneField::query(const torch::Tensor& points) const {
    const auto rows = points.size(0);
    if (scenes_.size() != 1 && rows != static_cast<int64_t>(scenes_.size())) {
        throw ContractViolation("scene field: one scene per batch row, or a single shared scene");
    }
    std::vector<torch::Tensor> densities;
    std::vector<torch::Tensor> colors;
    for (int64_t b = 0; b < rows; ++b) {
        const auto& scene = scenes_.size() == 1 ? scenes_.front() : scenes_[static_cast<size_t>(b)];
        const auto pts = points[b];
        auto total = torch::zeros({pts.size(0)}, pts.options());
        auto color = torch::zeros({pts.size(0), 3}, pts.options());
        for (const auto& p : scene.primitives) {
            const auto d = primitive_density(p, pts);
            const auto rgb = torch::tensor({p.rgb[0], p.rgb[1], p.rgb[2]}, torch::kFloat64).to(pts.options());
            total = total + d;
            color = color + d.unsqueeze(-1) * rgb;
        }
        colors.push_back(color / total.clamp_min(1e-12).unsqueeze(-1));
        densities.push_back(total);
    }
    return PointDecode{torch::stack(densities), torch::stack(colors)};
}

RenderConfig SyntheticDatasetConfig::render_config() const {
    RenderConfig r;
    r.feature_resolution = resolution;
    r.samples_per_ray = samples_per_ray;
    r.near = near();
    r.far = far();
    r.stratified = false;
    r.background = background;
    return r;
}

bool Dataset::has_ground_truth() const {
    return !records.empty() && std::all_of(records.begin(), records.end(), [](const DatasetRecord& r) {
        return r.gt_depth.has_value() && r.gt_pose.has_value();
    });
}

std::vector<DatasetRecord> render_scene_views(const SyntheticScene& scene, std::span<const CameraPose> poses,
                                              const SyntheticDatasetConfig& cfg) {
    torch::NoGradGuard no_grad;
    const SceneField field(std::vector<SyntheticScene>(poses.size(), scene));
    auto cfg_render = cfg.render_config();
    cfg_render.background = scene.background;
    const auto out = render(field, poses, cfg_render, nullptr, torch::kFloat64);
    std::vector<DatasetRecord> records;
    for (size_t i = 0; i < poses.size(); ++i) {
        DatasetRecord rec;
        rec.image = (out.rgb_low[static_cast<int64_t>(i)] * 2.0 - 1.0).to(torch::kFloat32).contiguous();
        rec.gt_pose = poses[i];
        rec.gt_depth = out.depth[static_cast<int64_t>(i)].to(torch::kFloat32).contiguous();
        records.push_back(std::move(rec));
    }
    return records;
}

Dataset generate_synthetic_dataset(const SyntheticDatasetConfig& cfg) {
    if (cfg.n_scenes < 1 || cfg.views_per_scene < 1) throw ConfigError("synthetic dataset needs >= 1 scene and view");
    cfg.prior.validate();
    Dataset ds;
    ds.depth_range = std::make_pair(cfg.near(), cfg.far());
    for (int64_t s = 0; s < cfg.n_scenes; ++s) {
        Rng rng(cfg.seed, "synthetic.scene", static_cast<std::uint64_t>(s));
        const auto scene = SyntheticScene::random(rng, cfg.background);
        std::vector<CameraPose> poses;
        for (int64_t v = 0; v < cfg.views_per_scene; ++v) poses.push_back(sample_pose(cfg.prior, rng));
        for (auto& rec : render_scene_views(scene, poses, cfg)) ds.records.push_back(std::move(rec));
    }
    return ds;
}

namespace {

std::string record_name(size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu.png", index);
    return buf;
}

json law_json(const AngleLaw& law) {
    return law.to_string();
}

} // namespace

void save_synthetic_dataset(const Dataset& ds, const SyntheticDatasetConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "depth");
    std::ofstream poses(dir / "poses.csv");
    poses.precision(17);
    poses << "index,pitch,yaw,radius,fov\n";
    for (size_t i = 0; i < ds.records.size(); ++i) {
        const auto& rec = ds.records[i];
        write_rgb_png(rec.image, dir / "images" / record_name(i));
        if (rec.gt_depth) write_depth_png(*rec.gt_depth, cfg.near(), cfg.far(), dir / "depth" / record_name(i));
        if (rec.gt_pose) {
            poses << i << ',' << rec.gt_pose->pitch << ',' << rec.gt_pose->yaw << ',' << rec.gt_pose->radius << ','
                  << rec.gt_pose->fov << '\n';
        }
    }
    json manifest = {
        {"format", "posefree-synthetic-v1"},
        {"seed", cfg.seed},
        {"scenes", cfg.n_scenes},
        {"views_per_scene", cfg.views_per_scene},
        {"records", ds.records.size()},
        {"resolution", cfg.resolution},
        {"samples_per_ray", cfg.samples_per_ray},
        {"near", cfg.near()},
        {"far", cfg.far()},
        {"background", cfg.background},
        {"prior", {{"pitch", law_json(cfg.prior.pitch)}, {"yaw", law_json(cfg.prior.yaw)},
                   {"radius", cfg.prior.radius}, {"fov", cfg.prior.fov}}},
    };
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

bool is_synthetic_dataset_dir(const fs::path& dir) {
    return fs::is_regular_file(dir / "manifest.json") && fs::is_directory(dir / "images");
}

Dataset load_synthetic_dataset(const fs::path& dir) {
    if (!is_synthetic_dataset_dir(dir)) throw ConfigError(dir.string() + " is not a synthetic dataset directory");
    json manifest;
    std::ifstream(dir / "manifest.json") >> manifest;
    const double near = manifest.at("near").get<double>();
    const double far = manifest.at("far").get<double>();
    const auto count = manifest.at("records").get<size_t>();

    std::vector<CameraPose> poses(count);
    std::ifstream csv(dir / "poses.csv");
    std::string line;
    std::getline(csv, line); // header
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::array<double, 5> v{};
        for (auto& x : v) {
            std::getline(row, cell, ',');
            x = std::stod(cell);
        }
        const auto index = static_cast<size_t>(v[0]);
        if (index < count) poses[index] = CameraPose{v[1], v[2], v[3], v[4]};
    }

    Dataset ds;
    ds.depth_range = std::make_pair(near, far);
    for (size_t i = 0; i < count; ++i) {
        auto image = read_rgb_image(dir / "images" / record_name(i));
        if (!image) throw std::runtime_error("cannot decode " + (dir / "images" / record_name(i)).string());
        DatasetRecord rec;
        rec.image = *image;
        rec.gt_pose = poses[i];
        rec.gt_depth = read_depth_png(dir / "depth" / record_name(i), near, far);
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

torch::Tensor horizontal_flip(const torch::Tensor& image) {
    return image.flip({-1});
}

Dataset load_image_folder(const fs::path& dir, int64_t resolution, bool flip_augment, std::uint64_t seed) {
    if (!fs::is_directory(dir)) throw ConfigError("image folder " + dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    Rng rng(seed, "image_folder.flip");
    Dataset ds;
    for (const auto& f : files) {
        auto image = read_rgb_image(f);
        if (!image) {
            std::cerr << "warning: skipping unreadable image " << f.string() << '\n';
            continue;
        }
        DatasetRecord rec;
        rec.image = center_crop_resize(*image, resolution);
        if (flip_augment && rng.bernoulli(0.5)) rec.image = horizontal_flip(rec.image);
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty()) throw ConfigError("image folder " + dir.string() + " contains no decodable images");
    return ds;
}

TrainingImages::TrainingImages(const Dataset& ds) {
    if (ds.records.empty()) throw ConfigError("training needs at least one image");
    std::vector<torch::Tensor> images;
    images.reserve(ds.records.size());
    for (const auto& rec : ds.records) images.push_back(rec.image);
    images_ = torch::stack(images).to(torch::kFloat32).contiguous();
}

TrainingImages::TrainingImages(torch::Tensor images) : images_(std::move(images)) {
    TORCH_CHECK(images_.dim() == 4 && images_.size(1) == 3, "training images must be [N, 3, H, W]");
}

torch::Tensor TrainingImages::sample(int64_t batch, Rng& rng, bool flip) const {
    std::vector<torch::Tensor> picks;
    picks.reserve(static_cast<size_t>(batch));
    const auto n = static_cast<double>(size());
    for (int64_t i = 0; i < batch; ++i) {
        const auto idx = std::min<int64_t>(static_cast<int64_t>(rng.uniform(0.0, n)), size() - 1);
        auto img = images_[idx];
        if (flip && rng.bernoulli(0.5)) img = horizontal_flip(img);
        picks.push_back(img);
    }
    return torch::stack(picks);
}

} // namespace posefree
