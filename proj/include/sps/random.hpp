#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sps {

using Rng = std::mt19937_64;

/// Seed of the named substream `stream` (and `index`) of a run seed. All
/// randomness in a run is drawn from substreams of the single run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) noexcept;

inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

/// Uniform double in [0, 1) built from the raw engine output, so sequences
/// do not depend on the standard library's distribution implementations.
double uniform01(Rng& rng) noexcept;

/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n) noexcept;

/// Standard normal draw (Box-Muller on uniform01).
double standard_normal(Rng& rng) noexcept;

}  // namespace sps
