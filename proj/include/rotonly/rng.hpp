// Portable counter-based random number generator.
//
// The generator is a pure function of (seed, stream, counter) built from the
// SplitMix64 finalizer (Steele, Lea & Flood 2014, mixing constants from
// MurmurHash3/Stafford variant 13). No platform-dependent state: the same
// (seed, stream) pair produces the same sequence on every platform, which is
// what makes scene generation and Monte-Carlo trials reproducible bit for bit.
#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace rotonly {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(detail::splitmix64(seed ^ detail::splitmix64(stream))) {}

  // Derives a decorrelated child seed, e.g. one per trial or per observation.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return detail::splitmix64(seed ^ detail::splitmix64(stream));
  }

  std::uint64_t next_u64() { return detail::splitmix64(key_ ^ counter_++); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, n).
  int next_int(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Uniform direction on the unit sphere.
  Eigen::Vector3d unit_vector() {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * M_PI);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
  }

  // Uniform point inside a ball of the given radius.
  Eigen::Vector3d in_ball(double radius) {
    const double u = next_double();
    return unit_vector() * (radius * std::cbrt(u));
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rotonly
