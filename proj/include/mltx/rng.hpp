#pragma once

// Deterministic randomness. std::mt19937_64's output sequence is fixed by the
// standard; the standard distributions are not, so bounded picks go through
// below() to keep traces identical across standard libraries.

#include <cstdint>
#include <random>
#include <string_view>

namespace mltx {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform-ish pick in [0, n). n must be positive.
inline std::uint64_t below(Rng& rng, std::uint64_t n) { return rng() % n; }

/// Inclusive range [lo, hi].
inline std::int64_t between(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(below(rng, static_cast<std::uint64_t>(hi - lo) + 1));
}

inline bool chance(Rng& rng, double p) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
}

}  // namespace mltx
