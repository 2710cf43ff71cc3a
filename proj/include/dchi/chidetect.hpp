#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dchi/errors.hpp"
#include "dchi/estimator.hpp"
#include "dchi/gainsynth.hpp"
#include "dchi/linalg.hpp"
#include "dchi/mat.hpp"

namespace dchi {

namespace detail {

// Series for P(a, x), valid for x < a + 1.
inline double gamma_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x), valid for x >= a + 1.
inline double gamma_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-17) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double reg_lower_gamma(double a, double x) {
  if (!(a > 0.0)) throw std::invalid_argument("reg_lower_gamma: a must be positive");
  if (!(x >= 0.0)) throw std::invalid_argument("reg_lower_gamma: x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return detail::gamma_series(a, x);
  return 1.0 - detail::gamma_continued_fraction(a, x);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), accurate in the tail.
inline double reg_upper_gamma(double a, double x) {
  if (!(a > 0.0)) throw std::invalid_argument("reg_upper_gamma: a must be positive");
  if (!(x >= 0.0)) throw std::invalid_argument("reg_upper_gamma: x must be nonnegative");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_series(a, x);
  return detail::gamma_continued_fraction(a, x);
}

/// Survival function of the chi-square distribution with `dof` degrees of freedom.
inline double chi2_sf(double x, double dof) { return reg_upper_gamma(0.5 * dof, 0.5 * x); }

/// Detection threshold theta with P(chi2_T >= theta) = p, i.e.
/// theta = 2 P^{-1}(1 - p, T/2). Bisection on a doubling bracket, then Newton.
inline double threshold_from_far(double p, std::size_t t) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("threshold_from_far: FAR must lie in (0, 1)");
  if (t == 0) throw std::invalid_argument("threshold_from_far: window length must be positive");
  const double a = 0.5 * static_cast<double>(t);
  auto tail = [&](double theta) { return reg_upper_gamma(a, 0.5 * theta); };
  double lo = 0.0;
  double hi = static_cast<double>(t);
  while (tail(hi) > p) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 60 && hi - lo > 1e-6 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (tail(mid) > p ? lo : hi) = mid;
  }
  double theta = 0.5 * (lo + hi);
  for (int i = 0; i < 50; ++i) {
    const double x = 0.5 * theta;
    // d/dtheta of the tail is minus half the gamma(a, 1) density at x
    const double dens = 0.5 * std::exp((a - 1.0) * std::log(x) - x - std::lgamma(a));
    if (!(dens > 0.0)) break;
    const double step = (tail(theta) - p) / dens;
    double next = theta + step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    (tail(next) > p ? lo : hi) = next;
    const bool settled = std::abs(next - theta) <= 1e-15 * theta;
    theta = next;
    if (settled) break;
  }
  return theta;
}

enum class VarianceMethod { paper_bound, lyapunov_exact };

inline std::string_view to_string(VarianceMethod m) {
  return m == VarianceMethod::paper_bound ? "paper-bound" : "lyapunov-exact";
}

/// Attack-free residual variance levels Λ_i and the quantities behind them.
/// For the Lyapunov route phi holds |Ξ_∞|_2 / N.
struct VarianceBound {
  VarianceMethod method = VarianceMethod::paper_bound;
  double phi = 0.0;
  Vec lambda;
  double b = std::numeric_limits<double>::quiet_NaN();
  double a1 = std::numeric_limits<double>::quiet_NaN();
  double a2 = std::numeric_limits<double>::quiet_NaN();
  double a3 = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr double kLambdaFloor = 1e-12;

/// Stationary covariance of the attack-free error noise:
/// (I - K D_H)(1 1^T ⊗ Q)(I - K D_H)^T + K D̄_H R D̄_H^T K^T.
inline Mat attack_free_noise_cov(const Mat& k, const Mat& h, const Mat& q, const Vec& r) {
  const std::size_t N = h.rows();
  const Mat dh = assemble_dh(h);
  const Mat dhb = assemble_dh_bar(h);
  const Mat ikd = Mat::identity(k.rows()) - k * dh;
  const Mat kdb = k * dhb;
  return symmetrized(ikd * kron(Mat::constant(N, N, 1.0), q) * ikd.transpose() + kdb * Mat::diag(r) * kdb.transpose());
}

/// Norm-based bound Φ = (a1 N|Q| + a2 a3 |R|) / (N (1 - b^2)) with Λ_i = H_i Φ H_i^T + R_i.
/// Throws BoundInapplicable when b = |Ā|_2 >= 1.
inline VarianceBound compute_phi_paper_bound(const Mat& abar, const Mat& k, const Mat& h, const Mat& q, const Vec& r) {
  const std::size_t N = h.rows();
  if (r.size() != N) throw std::invalid_argument("compute_phi_paper_bound: one noise variance per sensor");
  VarianceBound vb;
  vb.method = VarianceMethod::paper_bound;
  vb.b = two_norm(abar);
  const double a1_root = two_norm(Mat::identity(k.rows()) - k * assemble_dh(h));
  vb.a1 = a1_root * a1_root;
  const double k_norm = two_norm(k);
  vb.a2 = k_norm * k_norm;
  // R̄ = diag[H_i^T R_i H_i]
  Mat rbar(h.cols() * N, h.cols() * N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t p = 0; p < h.cols(); ++p)
      for (std::size_t s = 0; s < h.cols(); ++s) rbar(i * h.cols() + p, i * h.cols() + s) = h(i, p) * r[i] * h(i, s);
  const double r_norm = *std::max_element(r.begin(), r.end());
  vb.a3 = two_norm(rbar) / r_norm;
  if (!(vb.b < 1.0)) {
    throw BoundInapplicable("compute_phi_paper_bound: |Ā|_2 = " + std::to_string(vb.b) +
                                " >= 1, use the Lyapunov route",
                            vb.b);
  }
  const double nd = static_cast<double>(N);
  vb.phi = (vb.a1 * nd * two_norm(q) + vb.a2 * vb.a3 * r_norm) / (nd * (1.0 - vb.b * vb.b));
  vb.lambda.resize(N);
  for (std::size_t i = 0; i < N; ++i) vb.lambda[i] = std::max(vb.phi * dot(h.row(i), h.row(i)) + r[i], kLambdaFloor);
  return vb;
}

/// Λ_i = H_i Ξ^{ii} H_i^T + R_i from the exact steady state Ξ = Ā Ξ Ā^T + Σ.
inline VarianceBound compute_phi_lyapunov(const Mat& abar, const Mat& sigma, const Mat& h, const Vec& r,
                                          Mat* xi_out = nullptr) {
  const std::size_t N = h.rows(), n = h.cols();
  if (r.size() != N) throw std::invalid_argument("compute_phi_lyapunov: one noise variance per sensor");
  const Mat xi = solve_discrete_lyapunov(abar, sigma);
  VarianceBound vb;
  vb.method = VarianceMethod::lyapunov_exact;
  vb.phi = two_norm(xi) / static_cast<double>(N);
  vb.lambda.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) s += h(i, p) * xi(i * n + p, i * n + q) * h(i, q);
    vb.lambda[i] = std::max(s + r[i], kLambdaFloor);
  }
  if (xi_out) *xi_out = xi;
  return vb;
}

enum class VarianceSource { automatic, paper_bound, lyapunov_exact };

/// Both routes where they apply, and the one selected for detection.
struct VarianceAnalysis {
  VarianceBound chosen;
  std::optional<VarianceBound> paper;
  std::optional<VarianceBound> lyapunov;
  double b = std::numeric_limits<double>::quiet_NaN();
};

/// Automatic selection uses the paper bound when b < 1 and the Lyapunov
/// solution otherwise.
inline VarianceAnalysis analyze_variance(const Mat& abar, const Mat& k, const Mat& h, const Mat& q, const Vec& r,
                                         VarianceSource source = VarianceSource::automatic) {
  VarianceAnalysis out;
  try {
    out.paper = compute_phi_paper_bound(abar, k, h, q, r);
    out.b = out.paper->b;
  } catch (const BoundInapplicable& e) {
    out.b = e.b();
    if (source == VarianceSource::paper_bound) throw;
  }
  try {
    out.lyapunov = compute_phi_lyapunov(abar, attack_free_noise_cov(k, h, q, r), h, r);
  } catch (const Divergence&) {
    if (source == VarianceSource::lyapunov_exact || !out.paper) throw;
  }
  if (out.lyapunov) {
    out.lyapunov->b = out.b;
    if (out.paper) {
      out.lyapunov->a1 = out.paper->a1;
      out.lyapunov->a2 = out.paper->a2;
      out.lyapunov->a3 = out.paper->a3;
    }
  }
  switch (source) {
    case VarianceSource::paper_bound:
      out.chosen = *out.paper;
      break;
    case VarianceSource::lyapunov_exact:
      out.chosen = *out.lyapunov;
      break;
    case VarianceSource::automatic:
      out.chosen = out.paper ? *out.paper : *out.lyapunov;
      break;
  }
  return out;
}

/// Sliding window of the last T normalized squared residuals of one sensor.
class DistanceWindow {
 public:
  explicit DistanceWindow(std::size_t t) : t_(t) {
    if (t == 0) throw std::invalid_argument("DistanceWindow: window length must be positive");
  }

  /// Pushes z = r^2 / lambda and returns (z, v).
  std::pair<double, double> update(double r, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("DistanceWindow: lambda must be positive");
    const double z = r * r / lambda;
    buf_.push_back(z);
    if (buf_.size() > t_) buf_.pop_front();
    ++count_;
    v_ = 0.0;
    for (double x : buf_) v_ += x;
    return {z, v_};
  }

  double v() const noexcept { return v_; }
  bool warm() const noexcept { return count_ >= t_; }
  std::size_t window() const noexcept { return t_; }
  const std::deque<double>& contents() const noexcept { return buf_; }

 private:
  std::size_t t_;
  std::deque<double> buf_;
  double v_ = 0.0;
  std::size_t count_ = 0;
};

struct Threshold {
  double far;
  double theta;
};

inline std::vector<Threshold> make_thresholds(const std::vector<double>& fars, std::size_t t) {
  std::vector<Threshold> out;
  for (double p : fars) out.push_back({p, threshold_from_far(p, t)});
  return out;
}

enum class Hypothesis { H0, H1 };

struct Verdict {
  std::size_t sensor = 0;
  std::size_t step = 0;
  double z = 0.0;
  double v = 0.0;
  std::vector<Hypothesis> outcome;  ///< one per threshold, same order

  bool any_h1() const {
    for (auto h : outcome)
      if (h == Hypothesis::H1) return true;
    return false;
  }
};

/// H1 for each threshold with v >= theta.
inline std::vector<Hypothesis> decide(double v, const std::vector<Threshold>& thresholds) {
  std::vector<Hypothesis> out;
  out.reserve(thresholds.size());
  for (const auto& t : thresholds) out.push_back(v >= t.theta ? Hypothesis::H1 : Hypothesis::H0);
  return out;
}

/// One window per sensor; verdicts are withheld until a sensor's window is full.
class ChiSquareDetector {
 public:
  ChiSquareDetector(Vec lambda, std::size_t t, std::vector<Threshold> thresholds)
      : lambda_(std::move(lambda)), thresholds_(std::move(thresholds)) {
    for (double& l : lambda_) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("ChiSquareDetector: invalid lambda");
      l = std::max(l, kLambdaFloor);
    }
    windows_.assign(lambda_.size(), DistanceWindow(t));
  }

  std::optional<Verdict> update(const ResidualRecord& rec) {
    auto& w = windows_.at(rec.sensor);
    const auto [z, v] = w.update(rec.value, lambda_[rec.sensor]);
    if (!w.warm()) return std::nullopt;
    return Verdict{rec.sensor, rec.step, z, v, decide(v, thresholds_)};
  }

  const std::vector<Threshold>& thresholds() const noexcept { return thresholds_; }
  const Vec& lambda() const noexcept { return lambda_; }
  const DistanceWindow& window(std::size_t sensor) const { return windows_.at(sensor); }
  std::size_t window_length() const noexcept { return windows_.empty() ? 0 : windows_.front().window(); }

 private:
  Vec lambda_;
  std::vector<Threshold> thresholds_;
  std::vector<DistanceWindow> windows_;
};

}  // namespace dchi
