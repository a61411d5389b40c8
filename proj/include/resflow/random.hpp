#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace resflow {

/// Named random streams. Values are part of the seeding scheme; never reuse
/// or renumber an existing id.
enum class Stream : std::uint64_t {
  micro_data = 1,
  micro_nodes = 2,
  mf_nodes = 3,
  mf_loss = 4,
  consistency = 5,
  ridge_noise = 6,
  test = 1000,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the `index`-th draw group of `stream` under a master seed.
///
/// seed = mix(mix(master ^ mix(stream)) + index). Adding a stream or an index
/// never shifts the seeds of another.
constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(master ^ mix64(static_cast<std::uint64_t>(stream))) + index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

}  // namespace resflow
