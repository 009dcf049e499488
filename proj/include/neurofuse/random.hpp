#pragma once

#include <cstdint>
#include <random>

namespace neurofuse {

/// SplitMix64 finalizer; used to derive independent sub-stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for sub-stream `stream` (and optional `index`) of a run seeded with `seed`.
/// Streams never depend on how many values another stream consumed.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index = 0) {
  return mix64(mix64(mix64(seed) ^ stream) ^ index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return Rng(stream_seed(seed, stream, index));
}

/// Standard normal draw via Box-Muller on the raw engine output, so sequences are
/// identical across standard library implementations.
double standard_normal(Rng& rng);

/// Uniform draw on [0, 1).
double uniform01(Rng& rng);

/// Uniform integer on [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace neurofuse
