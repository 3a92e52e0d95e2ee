#pragma once

// Seed derivation. Every random stream in a scenario is a child of the master
// seed, keyed by (purpose, ids...), so work units can run in any order or in
// parallel and still reproduce bit-identical output.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace rareq {

using Rng = std::mt19937_64;

enum class StreamTag : std::uint64_t {
  profile = 0x70726f66,
  shadowing = 0x73686164,
  rice = 0x72696365,
  training = 0x74726169,
  local = 0x6c6f6361,
  reference = 0x72656665,
  locations = 0x6c6f636e,
  mcmc = 0x6d636d63,
  split = 0x73706c74,
  bias = 0x62696173,
};

/// splitmix64 finalizer: a 64-bit avalanche mix.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, StreamTag tag, std::initializer_list<std::uint64_t> ids = {}) {
  std::uint64_t h = mix64(master ^ mix64(static_cast<std::uint64_t>(tag)));
  for (auto id : ids) h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, StreamTag tag, std::initializer_list<std::uint64_t> ids = {}) {
  return Rng(derive_seed(master, tag, ids));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal deviate (Box–Muller, no cached second value so the stream
/// position depends only on the number of calls).
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double exponential1(Rng& rng) {
  double u = uniform01(rng);
  while (u <= 0.0) u = uniform01(rng);
  return -std::log(u);
}

}  // namespace rareq
