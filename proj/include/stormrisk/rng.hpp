#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "stormrisk/common.hpp"

namespace stormrisk {

// All stochastic code draws through the helpers below rather than
// std::*_distribution, so a (seed, data, config) triple reproduces chains
// bit-for-bit regardless of the standard library in use.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Derives an independent stream, e.g. one per chain or per replicate
// (splitmix64 finalizer on seed + stream).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return Rng(z ^ (z >> 31));
}

// Uniform on [0, 1).
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform on (0, 1], safe under log().
inline double uniform01_pos(Rng& rng) { return 1.0 - uniform01(rng); }

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline int uniform_int(Rng& rng, int n) {
  // n small everywhere we use this; modulo bias is < 2^-50.
  return static_cast<int>(rng() % static_cast<std::uint64_t>(n));
}

// Standard normal via Marsaglia polar.
inline double normal(Rng& rng) {
  double u, v, s;
  do {
    u = 2.0 * uniform01(rng) - 1.0;
    v = 2.0 * uniform01(rng) - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return u * std::sqrt(-2.0 * std::log(s) / s);
}

inline double normal(Rng& rng, double mean, double sd) {
  return mean + sd * normal(rng);
}

inline double exponential(Rng& rng, double rate) {
  return -std::log(uniform01_pos(rng)) / rate;
}

// Unit-scale gamma via Marsaglia-Tsang, with the shape<1 boost.
inline double gamma_draw(Rng& rng, double shape) {
  if (shape <= 0.0) throw ValidationError("gamma shape must be positive");
  if (shape < 1.0) {
    double g = gamma_draw(rng, shape + 1.0);
    return g * std::pow(uniform01_pos(rng), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal(rng);
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = uniform01_pos(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

inline double chi_squared(Rng& rng, double df) {
  return 2.0 * gamma_draw(rng, 0.5 * df);
}

}  // namespace stormrisk
