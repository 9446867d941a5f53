#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace advdepth {

using Rng = std::mt19937_64;

/// Textual engine state, restorable with rng_restore.
inline std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void rng_restore(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
}

/// Uniform double in [0, 1) built from raw engine bits so sequences do not
/// depend on the standard library's distribution implementation.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

}  // namespace advdepth
