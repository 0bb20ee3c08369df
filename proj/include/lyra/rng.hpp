#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace lyra {

// Deterministic variates on top of mt19937_64. The std::uniform_*_distribution
// adapters are implementation-defined, so results would not be stable across
// standard libraries; these are pinned to the raw engine output.

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n == 0");
  const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    const std::uint64_t x = rng();
    if (x >= threshold) return x % n;
  }
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive range
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  return lo + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo) + 1));
}

inline double exponential(std::mt19937_64& rng, double rate) {
  return -std::log1p(-uniform01(rng)) / rate;
}

inline double gaussian(std::mt19937_64& rng, double mean = 0.0, double stddev = 1.0) {
  // Box-Muller; one value per call keeps the draw count predictable.
  double u = uniform01(rng);
  if (u <= 0.0) u = 0x1.0p-53;
  const double v = uniform01(rng);
  const double z = std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * v);
  return mean + stddev * z;
}

inline double lognormal(std::mt19937_64& rng, double mu, double sigma) {
  return std::exp(gaussian(rng, mu, sigma));
}

template <typename T>
void shuffle_deterministic(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace lyra
