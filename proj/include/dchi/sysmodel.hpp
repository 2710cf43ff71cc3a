#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dchi/errors.hpp"
#include "dchi/linalg.hpp"
#include "dchi/mat.hpp"
#include "dchi/netgraph.hpp"
#include "dchi/random.hpp"

namespace dchi {

/// x_{k+1} = A x_k + nu_k with nu_k ~ N(0, Q).
class SocialSystem {
 public:
  SocialSystem(Mat a, Mat q, Digraph graph) : a_(std::move(a)), q_(std::move(q)), graph_(std::move(graph)) {
    if (!a_.square() || a_.rows() == 0) throw std::invalid_argument("SocialSystem: A must be square and nonempty");
    if (q_.rows() != a_.rows() || !q_.square()) throw std::invalid_argument("SocialSystem: Q must match A");
    if (graph_.node_count() != a_.rows()) throw std::invalid_argument("SocialSystem: graph size must match A");
    if (!(Digraph::from_pattern(a_) == graph_.with_self_loops()))
      throw std::invalid_argument("SocialSystem: sparsity of A does not match the graph plus self-loops");
    q_lower_ = cholesky_psd(q_);
  }

  const Mat& a() const noexcept { return a_; }
  const Mat& q() const noexcept { return q_; }
  const Mat& q_lower() const noexcept { return q_lower_; }
  const Digraph& graph() const noexcept { return graph_; }
  std::size_t n() const noexcept { return a_.rows(); }

 private:
  Mat a_;
  Mat q_;
  Mat q_lower_;
  Digraph graph_;
};

/// Measurement rows H_i (one row per sensor) and noise variances R_i.
class SensorSuite {
 public:
  SensorSuite(Mat h, Vec r) : h_(std::move(h)), r_(std::move(r)) {
    if (h_.rows() == 0 || h_.rows() != r_.size())
      throw std::invalid_argument("SensorSuite: need one noise variance per measurement row");
    for (double v : r_)
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("SensorSuite: noise variances must be > 0");
  }

  /// Unit-selector rows from a sensing pattern.
  static SensorSuite from_pattern(const SensingPattern& sp, std::size_t n_states, Vec r) {
    sp.validate(n_states);
    Mat h(sp.sensor_count(), n_states);
    for (std::size_t i = 0; i < sp.sensor_count(); ++i) h(i, sp.state_of_sensor[i]) = 1.0;
    return SensorSuite(std::move(h), std::move(r));
  }

  const Mat& h() const noexcept { return h_; }
  std::span<const double> h_row(std::size_t i) const { return h_.row(i); }
  const Vec& r() const noexcept { return r_; }
  std::size_t sensor_count() const noexcept { return h_.rows(); }
  std::size_t n() const noexcept { return h_.cols(); }

 private:
  Mat h_;
  Vec r_;
};

struct AttackEpisode {
  std::size_t sensor = 0;
  std::size_t start = 0;
  std::optional<std::size_t> end;  ///< inclusive; open-ended when empty
  double mean = 0.0;
  double stddev = 0.0;

  bool active_at(std::size_t k) const { return k >= start && (!end || k <= *end); }
  friend bool operator==(const AttackEpisode&, const AttackEpisode&) = default;
};

class AttackSchedule {
 public:
  AttackSchedule() = default;

  explicit AttackSchedule(std::vector<AttackEpisode> episodes) : episodes_(std::move(episodes)) {
    for (const auto& e : episodes_) {
      if (e.end && *e.end < e.start) throw std::invalid_argument("AttackSchedule: episode ends before it starts");
      if (!(e.stddev >= 0.0) || !std::isfinite(e.mean))
        throw std::invalid_argument("AttackSchedule: invalid attack distribution");
    }
    for (std::size_t i = 0; i < episodes_.size(); ++i)
      for (std::size_t j = i + 1; j < episodes_.size(); ++j) {
        const auto& a = episodes_[i];
        const auto& b = episodes_[j];
        if (a.sensor != b.sensor) continue;
        const std::size_t a_end = a.end.value_or(std::numeric_limits<std::size_t>::max());
        const std::size_t b_end = b.end.value_or(std::numeric_limits<std::size_t>::max());
        if (a.start <= b_end && b.start <= a_end)
          throw std::invalid_argument("AttackSchedule: overlapping episodes on sensor " + std::to_string(a.sensor));
      }
  }

  const std::vector<AttackEpisode>& episodes() const noexcept { return episodes_; }
  bool empty() const noexcept { return episodes_.empty(); }

  const AttackEpisode* active(std::size_t sensor, std::size_t k) const {
    for (const auto& e : episodes_)
      if (e.sensor == sensor && e.active_at(k)) return &e;
    return nullptr;
  }

 private:
  std::vector<AttackEpisode> episodes_;
};

inline Vec step_truth(const SocialSystem& sys, std::span<const double> x, GaussianSampler& sampler) {
  if (x.size() != sys.n()) throw std::invalid_argument("step_truth: state length mismatch");
  const Vec zero(sys.n(), 0.0);
  Vec nu = sampler.sample(zero, sys.q_lower());
  Vec next = sys.a() * x;
  for (std::size_t i = 0; i < next.size(); ++i) next[i] += nu[i];
  return next;
}

/// y_i = H_i x + tau_i + eta_i. Measurement noise is drawn for every sensor on
/// every call; attack values come from a separate sampler only while an
/// episode is active, so attacked and clean runs share their noise.
inline Vec measure(const SensorSuite& suite, const AttackSchedule& atk, std::span<const double> x, std::size_t k,
                   GaussianSampler& noise, GaussianSampler& attack) {
  if (x.size() != suite.n()) throw std::invalid_argument("measure: state length mismatch");
  Vec y(suite.sensor_count());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = dot(suite.h_row(i), x) + std::sqrt(suite.r()[i]) * noise.standard_normal();
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (const auto* e = atk.active(i, k)) y[i] += attack.normal(e->mean, e->stddev);
  }
  return y;
}

inline Vec measure(const SensorSuite& suite, const AttackSchedule& atk, std::span<const double> x, std::size_t k,
                   GaussianSampler& sampler) {
  return measure(suite, atk, x, k, sampler, sampler);
}

/// Random weights on the graph pattern (self-loops added), drawn uniformly from
/// (0, 1.1] in row-major order, then scaled so that rho(A) = target_rho.
inline Mat make_random_a(const Digraph& graph, double target_rho, GaussianSampler& sampler) {
  if (!(target_rho > 0.0) || !std::isfinite(target_rho))
    throw std::invalid_argument("make_random_system: target spectral radius must be positive");
  const Digraph g = graph.with_self_loops();
  if (!is_structurally_full_rank(g)) throw std::invalid_argument("make_random_system: graph not structurally full rank");
  auto edges = g.edges();
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return std::pair(a.to, a.from) < std::pair(b.to, b.from); });
  const std::size_t n = g.node_count();
  for (int attempt = 0; attempt < 10; ++attempt) {
    Mat a(n, n);
    for (const auto& e : edges) a(e.to, e.from) = sampler.uniform_open_closed(0.0, 1.1);
    const double rho = spectral_radius_qr(a);
    if (!(rho > 1e-12)) continue;
    a *= target_rho / rho;
    return a;
  }
  throw std::runtime_error("make_random_system: ten degenerate draws with zero spectral radius");
}

inline SocialSystem make_random_system(const Digraph& graph, double target_rho, const Mat& q, GaussianSampler& sampler) {
  return SocialSystem(make_random_a(graph, target_rho, sampler), q, graph);
}

}  // namespace dchi
