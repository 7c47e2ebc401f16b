#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mfg {

// Counter-based generator: every variate is a pure function of its key,
// so particle loops can run in any order on any thread count and still
// produce bit-identical streams.
namespace rng {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

// Labeled sub-seed derivation (CLI subcommands, damping resampler, ...).
inline std::uint64_t label_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return combine(seed, h);
}

// Uniform in (0, 1), never exactly 0 or 1.
inline double u01(std::uint64_t key) {
  return static_cast<double>(key >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

struct Key {
  std::uint64_t state;
  explicit Key(std::uint64_t seed) : state(mix64(seed)) {}
  Key with(std::uint64_t v) const {
    Key k = *this;
    k.state = combine(k.state, v);
    return k;
  }
};

inline double uniform(const Key& k, std::uint64_t counter) {
  return u01(combine(k.state, counter));
}

// Box-Muller from two decorrelated counters.
inline double normal(const Key& k, std::uint64_t counter) {
  const double u1 = uniform(k, 2 * counter);
  const double u2 = uniform(k, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

}  // namespace rng
}  // namespace mfg
