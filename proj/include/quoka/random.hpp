#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace quoka {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; mixes a base seed with stream coordinates so that
// (layer, position, ...) tuples get independent, reproducible streams.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a = 0, std::uint64_t b = 0);

std::vector<float> gaussian_vector(Rng& rng, std::size_t n, float scale = 1.0f);

// Uniform integer in [0, bound) by rejection; independent of the standard
// library's distribution implementation.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

// k distinct values from [0, n), without replacement, sorted ascending.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

} // namespace quoka
