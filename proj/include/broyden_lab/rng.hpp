#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace broyden_lab {

/// Seeded, splittable random stream.
///
/// Engine: std::mt19937_64 (bit-exact by the C++ standard), seeded with
/// splitmix64(seed ^ splitmix64(stream)). The distribution transforms are
/// written out here rather than taken from <random>, whose distributions are
/// implementation-defined:
///   uniform01  = (next_u64() >> 11) * 2^-53
///   index(n)   = rejection sampling on next_u64() % n
///   normal     = Box-Muller on (1 - uniform01, uniform01), second value cached
class RngStream {
 public:
  static constexpr std::string_view kIdentity =
      "mt19937_64/splitmix64-seeded; uniform53; index=rejection-mod; normal=box-muller";

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream))) {}

  static constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  /// Independent child stream; does not advance this one.
  RngStream split(std::uint64_t tag) const {
    return RngStream(seed_, splitmix64(stream_ * 0x100000001B3ull + tag + 1));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  Eigen::Index index(Eigen::Index n) {
    const auto un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return static_cast<Eigen::Index>(r % un);
  }

  double normal() {
    if (cached_normal_) {
      const double v = *cached_normal_;
      cached_normal_.reset();
      return v;
    }
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  Eigen::VectorXd uniform_vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
  }

  /// Uniform on the unit sphere S^{n-1}.
  Eigen::VectorXd unit_sphere(Eigen::Index n) {
    Eigen::VectorXd v = normal_vector(n);
    double norm = v.norm();
    while (norm == 0.0) {
      v = normal_vector(n);
      norm = v.norm();
    }
    return v / norm;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
  std::optional<double> cached_normal_;
};

}  // namespace broyden_lab
