#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace gmmscape {

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, counter), so parallel consumers can pull the value for any
// index without shared state and results never depend on evaluation order.
namespace rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t bits(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t counter) {
  std::uint64_t h = mix64(seed ^ 0x2545f4914f6cdd1dULL);
  h = mix64(h + stream * kGolden);
  h = mix64(h + counter * kGolden);
  return h;
}

/// Uniform double in [0, 1).
inline double uniform(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t counter) {
  return static_cast<double>(bits(seed, stream, counter) >> 11) * 0x1.0p-53;
}

/// Uniform double in (0, 1]; safe as a log() argument.
inline double uniform_pos(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t counter) {
  return static_cast<double>((bits(seed, stream, counter) >> 11) + 1) *
         0x1.0p-53;
}

/// Two independent standard normals via Box-Muller from counters
/// (counter, counter + 1).
inline void normal_pair(std::uint64_t seed, std::uint64_t stream,
                        std::uint64_t counter, double& z0, double& z1) {
  const double u1 = uniform_pos(seed, stream, counter);
  const double u2 = uniform(seed, stream, counter + 1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}

/// Standard Gumbel deviate; argmax of log-weight + Gumbel samples the
/// softmax of the weights.
inline double gumbel(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t counter) {
  return -std::log(-std::log(uniform_pos(seed, stream, counter)));
}

/// Order-independent key for a point: hashes the coordinate bits, so any
/// permutation of a cloud assigns each point the same key.
inline std::uint64_t hash_coords(const double* x, int n) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (int i = 0; i < n; ++i) {
    h = mix64(h ^ std::bit_cast<std::uint64_t>(x[i]));
  }
  return h;
}

}  // namespace rng
}  // namespace gmmscape
