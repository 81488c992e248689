#pragma once

#include <cstdint>
#include <random>

namespace coronary {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Generator keyed by (seed, a, b); independent of the order in which keys are
/// visited.
inline Rng keyed_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  const std::uint64_t k = splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  return Rng(seq);
}

}  // namespace coronary
