#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

namespace bilevel {

/// Counter-based 64-bit generator (splitmix64 finalizer applied to
/// seed + counter).  Stateless apart from the counter, so a stream is fully
/// determined by (seed, number of draws); nested sample sets drawn from the
/// same seed share their prefix.  Within-build determinism only; no
/// cross-platform bit guarantee is made for the Gaussian path (libm).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * ++counter_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0,1), 53-bit mantissa.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (two draws per call, cosine branch).
  double gaussian() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::VectorXd gaussian_vec(int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = gaussian();
    return v;
  }

  /// Uniform on the unit sphere S^{d-1}.
  Eigen::VectorXd unit_sphere(int d) {
    Eigen::VectorXd v = gaussian_vec(d);
    double n = v.norm();
    while (n < 1e-300) {  // astronomically unlikely; redraw
      v = gaussian_vec(d);
      n = v.norm();
    }
    return v / n;
  }

  /// Uniform in the closed ball of given radius.
  Eigen::VectorXd ball(int d, double radius) {
    Eigen::VectorXd v = unit_sphere(d);
    double r = radius * std::pow(uniform01(), 1.0 / d);
    return r * v;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    auto k = static_cast<std::uint64_t>(uniform01() * static_cast<double>(n));
    return k >= n ? n - 1 : k;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace bilevel
