// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace posefree::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUserError = 2;
inline constexpr int kExitNumerical = 3;

struct TrainArgs {
    std::filesystem::path config;
    std::filesystem::path out;
    std::vector<std::string> overrides; ///< "section.key=value"
    int64_t log_every = 100;            ///< 0 disables progress lines
};

struct SweepArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path out;
    double yaw_lo_deg = -40.0;
    double yaw_hi_deg = 40.0;
    int64_t steps = 5;
    int64_t count = 1;
    std::uint64_t seed = 0;
};

struct EvalArgs {
    std::filesystem::path checkpoint;
    /// Synthetic dataset directory or image folder; empty re-renders the run's synthetic data.
    std::filesystem::path data;
    std::vector<std::string> metrics;
    std::filesystem::path out;
    std::uint64_t seed = 0;
    std::optional<int64_t> samples;
};

struct MakeDataArgs {
    std::optional<std::filesystem::path> config;
    std::filesystem::path out;
    std::vector<std::string> overrides;
    std::optional<int64_t> scenes;
    std::optional<int64_t> views;
    bool force = false;
};

/// Each command maps configuration and user errors to kExitUserError and
/// numerical failures to kExitNumerical, printing the reason to `err`.
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_make_data(const MakeDataArgs& args, std::ostream& out, std::ostream& err);

/// "lo:hi" in degrees.
std::pair<double, double> parse_yaw_range(const std::string& text);

/// Full command line: `posefree <train|sweep|eval|make-data> ...`.
int run(int argc, char** argv);

} // namespace posefree::cli
