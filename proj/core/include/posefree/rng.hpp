// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ATen/core/Generator.h>

#include <cstdint>
#include <random>
#include <string_view>

namespace posefree {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a, for turning a purpose tag into a stream key.
constexpr std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed of the stream identified by (seed, tag, counter). Streams are
/// counter-based so a run can be resumed from (seed, step) alone.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t counter = 0) {
    return mix64(mix64(seed ^ hash_tag(tag)) + counter);
}

/// Caller-owned random source for scalar draws (poses, scene layouts).
/// Tensor-valued draws go through a torch generator forked from it.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::string_view tag, std::uint64_t counter = 0)
        : engine_(derive_seed(seed, tag, counter)) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }
    bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }
    std::uint64_t next_u64() { return engine_(); }

    /// Fresh CPU torch generator seeded from this stream.
    at::Generator fork_torch();

private:
    std::mt19937_64 engine_;
};

at::Generator make_torch_generator(std::uint64_t seed);

} // namespace posefree
