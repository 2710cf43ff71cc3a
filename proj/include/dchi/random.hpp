#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>

#include "dchi/linalg.hpp"
#include "dchi/mat.hpp"

namespace dchi {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seeded source of uniform and Gaussian variates.
///
/// Equal (seed, stream) pairs give identical sequences. Normals come from a
/// Box-Muller transform over the raw 64-bit engine output, so the sequence does
/// not depend on the standard library's distribution implementations.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed, std::uint32_t stream = 0)
      : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(0xD1B54A32D192ED03ull + stream))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t stream() const noexcept { return stream_; }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (lo, hi].
  double uniform_open_closed(double lo, double hi) { return hi - (hi - lo) * uniform(); }

  double standard_normal() {
    if (spare_) {
      const double s = *spare_;
      spare_.reset();
      return s;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * standard_normal(); }

  Vec standard_normal_vec(std::size_t n) {
    Vec w(n);
    for (auto& v : w) v = standard_normal();
    return w;
  }

  /// mean + L w with L the lower factor of the covariance.
  Vec sample(std::span<const double> mean, const Mat& lower) {
    Vec w = standard_normal_vec(mean.size());
    Vec out(mean.begin(), mean.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j <= i; ++j) s += lower(i, j) * w[j];
      out[i] += s;
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::uint32_t stream_;
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

inline Vec sample_gaussian_vec(GaussianSampler& s, std::span<const double> mean, const Mat& cov) {
  if (cov.rows() != mean.size() || !cov.square())
    throw std::invalid_argument("sample_gaussian_vec: covariance does not match mean");
  return s.sample(mean, cholesky_psd(cov));
}

}  // namespace dchi
