#pragma once

// Deterministic, platform-independent random streams. Standard-library
// distributions are not bit-portable across implementations, so samplers
// are written out explicitly; splitmix64 provides the raw stream.

#include "rcq/linalg.hpp"

#include <cmath>
#include <cstdint>

namespace rcq {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Per-work-item stream: decorrelates (seed, index) pairs so workers can
  // draw independently in any order.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    Rng r(seed + 0x9e3779b97f4a7c15ULL * (index + 1));
    r.next();
    r.next();
    return r;
  }

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform on the unit sphere (z uniform in [-1,1], azimuth uniform).
  Vec3 unit_vec3() {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * kPi);
    const double r = z * z < 1.0 ? std::sqrt(1.0 - z * z) : 0.0;
    return Vec3(r * std::cos(phi), r * std::sin(phi), z);
  }

  // Standard normal via Marsaglia polar (deterministic pairing).
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  static constexpr double kPi = 3.14159265358979323846;

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rcq
