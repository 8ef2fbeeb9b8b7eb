#pragma once

#include <cstdint>
#include <random>

namespace pano {

/// All randomness in the project flows through these helpers instead of
/// std::*_distribution, whose output sequences are implementation-defined.
/// mt19937_64 itself is bit-exact across platforms, so seeded runs reproduce.
using Rng = std::mt19937_64;

/// Uniform in [0,1) with 53 random bits.
inline double uniform_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [lo, hi] inclusive.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng() % span);
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_real(rng);
}

/// Splits a seed into an independent stream; used to derive per-episode and
/// per-example seeds from (run seed, epoch, index) deterministically.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ULL + b;
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x += c * 0x94D049BB133111EBULL;
  x ^= x >> 27;
  x *= 0x2545F4914F6CDD1DULL;
  x ^= x >> 31;
  return x;
}

}  // namespace pano
