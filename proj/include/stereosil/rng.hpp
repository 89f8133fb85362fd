#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace stereosil {

/// Deterministic draws built directly on the mt19937_64 word stream, so
/// seeded pipelines reproduce bit-exactly regardless of standard-library
/// distribution internals.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive bounds
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(rng() % span);
}

inline double gaussian(std::mt19937_64& rng) {
  const double u = 1.0 - uniform01(rng);  // (0, 1]
  const double v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

inline Eigen::Vector3d uniform_unit_vector(std::mt19937_64& rng) {
  const double z = 1.0 - 2.0 * uniform01(rng);
  const double phi = 2.0 * M_PI * uniform01(rng);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {s * std::cos(phi), s * std::sin(phi), z};
}

/// Uniform over a solid ball of the given radius.
inline Eigen::Vector3d uniform_in_ball(std::mt19937_64& rng, double radius) {
  const Eigen::Vector3d dir = uniform_unit_vector(rng);
  return dir * (radius * std::cbrt(uniform01(rng)));
}

/// Uniform over a hollow shell r_inner <= |x| <= r_outer (density uniform in
/// volume, hence cube-root radial inversion).
inline Eigen::Vector3d uniform_in_shell(std::mt19937_64& rng, double r_inner, double r_outer) {
  const Eigen::Vector3d dir = uniform_unit_vector(rng);
  const double i3 = r_inner * r_inner * r_inner;
  const double o3 = r_outer * r_outer * r_outer;
  return dir * std::cbrt(i3 + (o3 - i3) * uniform01(rng));
}

}  // namespace stereosil
