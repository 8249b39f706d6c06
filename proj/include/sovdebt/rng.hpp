#pragma once

#include <cstdint>
#include <random>

namespace sovdebt {

// Inverse normal CDF, Wichura's AS241 (PPND16). Accurate to ~1e-16 over (0,1).
// Used instead of std::normal_distribution so draws are identical across
// standard library implementations.
double inverse_normal_cdf(double p);

// Deterministic RNG stream: mt19937_64 plus fixed uniform/normal mappings.
// The stream is fully specified by the seed, independent of platform.
struct Rng {
  std::mt19937_64 eng;

  explicit Rng(std::uint64_t seed) : eng(seed) {}

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

  // Standard normal via inverse CDF; nudges 0 up to keep the transform finite.
  double normal() {
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    return inverse_normal_cdf(u);
  }
};

}  // namespace sovdebt
