#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace treerec {

// Seeded sampling helpers. std::uniform_int_distribution is implementation
// defined, so bounded draws are done by hand to keep runs reproducible across
// standard libraries.

using Rng = std::mt19937_64;

// SplitMix64 finalizer; mixes a base seed with a stream id.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform integer in [0, bound). bound must be > 0.
std::uint64_t uniform_index(Rng& rng, std::uint64_t bound);

// count distinct indices drawn uniformly from [0, n), in draw order.
std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t count);

}  // namespace treerec
