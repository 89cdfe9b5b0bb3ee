// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/config.hpp"

#include "posefree/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace posefree {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

int64_t to_int(std::string_view v) {
    int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + std::string(v) + "'");
    return out;
}

std::uint64_t to_uint(std::string_view v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
    }
    return out;
}

double to_double(std::string_view v) {
    double out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + std::string(v) + "'");
    return out;
}

bool to_bool(std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("expected a boolean, got '" + std::string(v) + "'");
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_list(std::string_view v) {
    std::vector<std::string> out;
    while (!v.empty()) {
        const auto comma = v.find(',');
        auto item = trim(v.substr(0, comma));
        if (!item.empty()) out.emplace_back(item);
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

struct KeySpec {
    std::string section;
    std::string key;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define POSEFREE_INT(sec, field, name)                                                                     \
    KeySpec{#sec, name, [](RunConfig& c, std::string_view v) { c.sec.field = to_int(v); },                  \
            [](const RunConfig& c) { return std::to_string(c.sec.field); }}
#define POSEFREE_DOUBLE(sec, field, name)                                                                  \
    KeySpec{#sec, name, [](RunConfig& c, std::string_view v) { c.sec.field = to_double(v); },               \
            [](const RunConfig& c) { return fmt_double(c.sec.field); }}
#define POSEFREE_STRING(sec, field, name)                                                                  \
    KeySpec{#sec, name, [](RunConfig& c, std::string_view v) { c.sec.field = std::string(v); },             \
            [](const RunConfig& c) { return c.sec.field; }}

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = {
        POSEFREE_STRING(model, variant, "variant"),
        POSEFREE_INT(model, embed_dim, "embed_dim"),
        POSEFREE_INT(model, latent_dim, "latent_dim"),
        POSEFREE_INT(model, style_dim, "style_dim"),
        POSEFREE_INT(model, plane_resolution, "plane_resolution"),
        POSEFREE_INT(model, plane_channels, "plane_channels"),
        POSEFREE_INT(model, feature_channels, "feature_channels"),
        POSEFREE_INT(model, decoder_hidden, "decoder_hidden"),
        POSEFREE_INT(model, feature_resolution, "feature_resolution"),
        POSEFREE_INT(model, final_resolution, "final_resolution"),
        POSEFREE_INT(model, samples_per_ray, "samples_per_ray"),
        POSEFREE_INT(model, superres_hidden, "superres_hidden"),
        POSEFREE_INT(model, disc_channels, "disc_channels"),
        POSEFREE_INT(model, disc_hidden, "disc_hidden"),

        POSEFREE_DOUBLE(loss, tau, "tau"),
        POSEFREE_DOUBLE(loss, lambda_pose, "lambda_pose"),
        KeySpec{"loss", "lambda_contrast",
                [](RunConfig& c, std::string_view v) {
                    if (v.empty() || v == "auto") {
                        c.loss.lambda_contrast.reset();
                    } else {
                        c.loss.lambda_contrast = to_double(v);
                    }
                },
                [](const RunConfig& c) {
                    return c.loss.lambda_contrast ? fmt_double(*c.loss.lambda_contrast) : std::string("auto");
                }},
        POSEFREE_DOUBLE(loss, lambda_r1, "lambda_r1"),
        KeySpec{"loss", "pose_norm", [](RunConfig& c, std::string_view v) { c.loss.pose_norm = parse_pose_norm(v); },
                [](const RunConfig& c) { return pose_norm_name(c.loss.pose_norm); }},

        POSEFREE_INT(train, batch_size, "batch"),
        POSEFREE_INT(train, steps, "steps"),
        POSEFREE_DOUBLE(train, lr_g, "lr_g"),
        POSEFREE_DOUBLE(train, lr_d, "lr_d"),
        POSEFREE_DOUBLE(train, beta1, "beta1"),
        POSEFREE_DOUBLE(train, beta2, "beta2"),
        POSEFREE_DOUBLE(train, ema_decay, "ema_decay"),
        POSEFREE_INT(train, r1_every, "r1_every"),
        KeySpec{"train", "seed", [](RunConfig& c, std::string_view v) { c.train.seed = to_uint(v); },
                [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        KeySpec{"train", "flip", [](RunConfig& c, std::string_view v) { c.train.flip = to_bool(v); },
                [](const RunConfig& c) { return std::string(c.train.flip ? "true" : "false"); }},
        POSEFREE_INT(train, checkpoint_every, "checkpoint_every"),

        POSEFREE_STRING(data, source, "source"),
        POSEFREE_STRING(data, path, "path"),
        POSEFREE_STRING(data, prior, "prior"),
        POSEFREE_STRING(data, pitch, "pitch"),
        POSEFREE_STRING(data, yaw, "yaw"),
        POSEFREE_DOUBLE(data, radius, "radius"),
        POSEFREE_DOUBLE(data, fov, "fov"),
        POSEFREE_STRING(data, background, "background"),
        POSEFREE_INT(data, scenes, "scenes"),
        POSEFREE_INT(data, views, "views"),
        POSEFREE_INT(data, render_samples, "render_samples"),
        KeySpec{"data", "seed", [](RunConfig& c, std::string_view v) { c.data.seed = to_uint(v); },
                [](const RunConfig& c) { return std::to_string(c.data.seed); }},

        KeySpec{"eval", "metrics", [](RunConfig& c, std::string_view v) { c.eval.metrics = split_list(v); },
                [](const RunConfig& c) {
                    std::string out;
                    for (const auto& m : c.eval.metrics) out += (out.empty() ? "" : ",") + m;
                    return out;
                }},
        POSEFREE_INT(eval, samples, "samples"),
        POSEFREE_INT(eval, k, "k"),
        POSEFREE_INT(eval, n_poses, "n_poses"),
        POSEFREE_INT(eval, n_latents, "n_latents"),
        POSEFREE_INT(eval, feature_dim, "feature_dim"),
    };
    return table;
}

#undef POSEFREE_INT
#undef POSEFREE_DOUBLE
#undef POSEFREE_STRING

const std::vector<std::string> kSections = {"model", "loss", "train", "data", "eval"};
const std::vector<std::string> kMetrics = {"fid", "precision_recall", "depth_fd", "embedding"};

} // namespace

bool EvalConfig::wants(std::string_view metric) const {
    return std::find(metrics.begin(), metrics.end(), metric) != metrics.end();
}

std::vector<std::string> config_keys(std::string_view section) {
    std::vector<std::string> out;
    for (const auto& spec : key_table())
        if (spec.section == section) out.push_back(spec.key);
    return out;
}

void RunConfig::set(std::string_view section, std::string_view key, std::string_view value) {
    for (const auto& spec : key_table()) {
        if (spec.section == section && spec.key == key) {
            spec.set(*this, trim(value));
            return;
        }
    }
    if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
        throw ConfigError("unknown section '" + std::string(section) + "'");
    }
    throw ConfigError("unknown key '" + std::string(section) + "." + std::string(key) + "'");
}

RunConfig RunConfig::parse(std::string_view text, std::string_view source) {
    RunConfig cfg;
    std::string section;
    int line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto anchor = std::string(source) + ":" + std::to_string(line_no) + ": ";
        std::string_view line(raw);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(anchor + "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
                throw ConfigError(anchor + "unknown section '" + section + "'");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(anchor + "expected 'key = value'");
        if (section.empty()) throw ConfigError(anchor + "key outside of any section");
        try {
            cfg.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(anchor + e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(source) + ": " + e.what());
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

void RunConfig::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
        throw ConfigError("override '" + std::string(assignment) + "' must look like section.key=value");
    }
    set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)), assignment.substr(eq + 1));
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& section : kSections) {
        os << '[' << section << "]\n";
        for (const auto& spec : key_table()) {
            if (spec.section == section) os << spec.key << " = " << spec.get(*this) << '\n';
        }
        os << '\n';
    }
    return os.str();
}

void RunConfig::validate() const {
    const auto v = variant();
    v.validate();
    pipeline_config().validate();
    pose_prior().validate();
    loss.validate();
    if (model.disc_channels < 1 || model.disc_hidden < 1) throw ConfigError("discriminator widths must be >= 1");

    if (train.batch_size < 1) throw ConfigError("train.batch must be >= 1");
    if (v.has_embedding_head() && train.batch_size < 2) {
        throw ConfigError("train.batch must be >= 2 for contrastive variants (negatives come from the batch)");
    }
    if (train.steps < 0) throw ConfigError("train.steps must be >= 0");
    if (!(train.lr_g > 0.0) || !(train.lr_d > 0.0)) throw ConfigError("learning rates must be > 0");
    if (!(train.beta1 >= 0.0 && train.beta1 < 1.0) || !(train.beta2 >= 0.0 && train.beta2 < 1.0)) {
        throw ConfigError("optimizer betas must lie in [0, 1)");
    }
    if (!(train.ema_decay >= 0.0 && train.ema_decay < 1.0)) throw ConfigError("train.ema_decay must lie in [0, 1)");
    if (train.r1_every < 1) throw ConfigError("train.r1_every must be >= 1");
    if (train.checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");

    if (data.source != "synthetic" && data.source != "folder") {
        throw ConfigError("data.source must be synthetic or folder, got '" + data.source + "'");
    }
    if (data.source == "folder" && data.path.empty()) throw ConfigError("data.path is required for folder data");
    if (data.background != "black" && data.background != "white") {
        throw ConfigError("data.background must be black or white");
    }
    if (data.scenes < 1 || data.views < 1) throw ConfigError("data.scenes and data.views must be >= 1");
    if (data.render_samples < 2) throw ConfigError("data.render_samples must be >= 2");

    for (const auto& m : eval.metrics) {
        if (std::find(kMetrics.begin(), kMetrics.end(), m) == kMetrics.end()) {
            throw ConfigError("unknown metric '" + m + "'");
        }
    }
    if (eval.samples < 2 || eval.k < 1 || eval.k >= eval.samples) throw ConfigError("eval needs samples > k >= 1");
    if (eval.n_poses < 4 || eval.n_latents < 2) throw ConfigError("eval needs n_poses >= 4 and n_latents >= 2");
    if (eval.feature_dim < 1 || eval.samples < eval.feature_dim + 1) {
        throw ConfigError("eval.samples must exceed eval.feature_dim for covariance estimation");
    }
}

DiscVariant RunConfig::variant() const {
    return DiscVariant{DiscVariant::parse_kind(model.variant), model.embed_dim};
}

PoseDistribution RunConfig::pose_prior() const {
    PoseDistribution d;
    if (data.prior == "custom") {
        if (data.pitch.empty() || data.yaw.empty()) {
            throw ConfigError("custom pose prior needs data.pitch and data.yaw");
        }
    } else {
        d = PoseDistribution::preset(data.prior);
    }
    if (!data.pitch.empty()) d.pitch = AngleLaw::parse(data.pitch);
    if (!data.yaw.empty()) d.yaw = AngleLaw::parse(data.yaw);
    d.radius = data.radius;
    d.fov = data.fov;
    return d;
}

std::array<double, 3> RunConfig::background_rgb() const {
    return data.background == "white" ? std::array<double, 3>{1.0, 1.0, 1.0} : std::array<double, 3>{0.0, 0.0, 0.0};
}

RenderConfig RunConfig::render_config() const {
    RenderConfig r;
    r.feature_resolution = model.feature_resolution;
    r.samples_per_ray = model.samples_per_ray;
    r.near = default_near(data.radius);
    r.far = default_far(data.radius);
    r.stratified = true;
    r.background = background_rgb();
    return r;
}

PipelineConfig RunConfig::pipeline_config() const {
    PipelineConfig p;
    p.generator.latent_dim = model.latent_dim;
    p.generator.style_dim = model.style_dim;
    p.generator.plane_resolution = model.plane_resolution;
    p.generator.plane_channels = model.plane_channels;
    p.generator.feature_channels = model.feature_channels;
    p.generator.decoder_hidden = model.decoder_hidden;
    p.render = render_config();
    p.final_resolution = model.final_resolution;
    p.superres_hidden = model.superres_hidden;
    return p;
}

DiscriminatorConfig RunConfig::discriminator_config() const {
    DiscriminatorConfig d;
    d.variant = variant();
    d.image_resolution = model.final_resolution;
    d.base_channels = model.disc_channels;
    d.hidden = model.disc_hidden;
    return d;
}

} // namespace posefree
