#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dchi/gainsynth.hpp"
#include "dchi/mat.hpp"

namespace dchi {

/// Per-sensor priors and posteriors at step k.
struct EstimatorState {
  std::size_t step = 0;
  std::vector<Vec> priors;
  std::vector<Vec> posteriors;

  /// All estimates start at zero.
  static EstimatorState zeros(std::size_t sensors, std::size_t n) {
    return {0, std::vector<Vec>(sensors, Vec(n, 0.0)), std::vector<Vec>(sensors, Vec(n, 0.0))};
  }
};

struct ResidualRecord {
  std::size_t sensor = 0;
  std::size_t step = 0;
  double value = 0.0;
};

/// What sensor i receives from one in-neighbour j during the fusion exchange.
struct NeighborEstimate {
  double weight;
  std::span<const double> posterior;
};

/// Prior of one sensor from the posteriors it received: sum_j w_ij A x_j.
inline Vec fuse_prior(const Mat& a, std::span<const NeighborEstimate> received) {
  Vec mix(a.cols(), 0.0);
  for (const auto& nb : received) {
    if (nb.posterior.size() != a.cols()) throw std::invalid_argument("fuse_prior: estimate length mismatch");
    for (std::size_t p = 0; p < mix.size(); ++p) mix[p] += nb.weight * nb.posterior[p];
  }
  return a * mix;
}

/// Consensus step: every sensor fuses the step k-1 posteriors of its
/// in-neighbours (w_ij != 0) and advances to step k.
inline void predict(EstimatorState& st, const Mat& w, const Mat& a) {
  const std::size_t sensors = st.posteriors.size();
  if (w.rows() != sensors || !w.square()) throw std::invalid_argument("predict: W does not match sensor count");
  std::vector<NeighborEstimate> received;
  st.priors.resize(sensors);
  for (std::size_t i = 0; i < sensors; ++i) {
    received.clear();
    for (std::size_t j = 0; j < sensors; ++j)
      if (w(i, j) != 0.0) received.push_back({w(i, j), st.posteriors[j]});
    st.priors[i] = fuse_prior(a, received);
  }
  ++st.step;
}

/// Local innovation update: posterior = prior + K_i H_i^T (y_i - H_i prior).
inline void correct(EstimatorState& st, const GainSet& gains, std::span<const double> y, const Mat& h) {
  const std::size_t sensors = st.priors.size();
  if (y.size() != sensors || h.rows() != sensors || gains.blocks.size() != sensors)
    throw std::invalid_argument("correct: sensor count mismatch");
  st.posteriors.resize(sensors);
  for (std::size_t i = 0; i < sensors; ++i) {
    const auto hi = h.row(i);
    const Vec col = gain_column(gains.blocks[i], hi);
    const double innov = y[i] - dot(hi, st.priors[i]);
    Vec post = st.priors[i];
    for (std::size_t p = 0; p < post.size(); ++p) post[p] += col[p] * innov;
    st.posteriors[i] = std::move(post);
  }
}

/// r_i = y_i - H_i x_{k|k}.
inline std::vector<ResidualRecord> residual(const EstimatorState& st, std::span<const double> y, const Mat& h) {
  std::vector<ResidualRecord> out(st.posteriors.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {i, st.step, y[i] - dot(h.row(i), st.posteriors[i])};
  return out;
}

/// |x_k - x_{k|k}^i|^2 / n for each sensor.
inline Vec mse_per_sensor(std::span<const double> truth, const EstimatorState& st) {
  Vec out(st.posteriors.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < truth.size(); ++p) {
      const double e = truth[p] - st.posteriors[i][p];
      s += e * e;
    }
    out[i] = s / static_cast<double>(truth.size());
  }
  return out;
}

/// MSE per step (outer) and sensor (inner) for aligned truth and state histories.
inline std::vector<Vec> error_trace(const std::vector<Vec>& truth, const std::vector<EstimatorState>& history) {
  if (truth.size() != history.size()) throw std::invalid_argument("error_trace: history length mismatch");
  std::vector<Vec> out;
  out.reserve(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) out.push_back(mse_per_sensor(truth[k], history[k]));
  return out;
}

/// Stacked error x_k 1 - [x^1; ...; x^N] (Nn vector).
inline Vec stacked_error(std::span<const double> truth, const EstimatorState& st) {
  const std::size_t n = truth.size();
  Vec e(st.posteriors.size() * n);
  for (std::size_t i = 0; i < st.posteriors.size(); ++i)
    for (std::size_t p = 0; p < n; ++p) e[i * n + p] = truth[p] - st.posteriors[i][p];
  return e;
}

}  // namespace dchi
