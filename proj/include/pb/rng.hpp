#pragma once

#include <cmath>
#include <cstdint>

namespace pb {

// Counter-based random number generation keyed by (seed, path, step, slot).
// Every draw is a pure function of its key, so batches are reproducible
// bit-for-bit and independent of scheduling or worker count.
namespace rng {

inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t path,
                         std::uint64_t step, std::uint64_t slot) {
  std::uint64_t h = mix(seed ^ 0x6a09e667f3bcc909ULL);
  h = mix(h ^ path);
  h = mix(h ^ step);
  h = mix(h ^ slot);
  return h;
}

// uniform in (0,1), never exactly 0 or 1
inline double uniform_from(std::uint64_t h) {
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t path,
                      std::uint64_t step, std::uint64_t slot) {
  return uniform_from(key(seed, path, step, slot));
}

// Box-Muller pair from two chained uniforms
inline void normal_pair(std::uint64_t seed, std::uint64_t path,
                        std::uint64_t step, std::uint64_t pair_slot,
                        double& z0, double& z1) {
  const std::uint64_t h1 = key(seed, path, step, 2 * pair_slot);
  const std::uint64_t h2 = mix(h1 ^ 0x9e3779b97f4a7c15ULL);
  const double u1 = uniform_from(h1);
  const double u2 = uniform_from(h2);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}

// slot indexes standard normals; consecutive slots share a Box-Muller pair
inline double normal(std::uint64_t seed, std::uint64_t path,
                     std::uint64_t step, std::uint64_t slot) {
  double z0, z1;
  normal_pair(seed, path, step, slot / 2, z0, z1);
  return (slot & 1) ? z1 : z0;
}

}  // namespace rng
}  // namespace pb
