#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dchi/errors.hpp"
#include "dchi/linalg.hpp"
#include "dchi/mat.hpp"
#include "dchi/random.hpp"

namespace dchi {

/// Block-diagonal estimator gain K = diag[K_i] plus its isolation metadata.
struct GainSet {
  std::vector<Mat> blocks;
  double c_floor = 0.0;
  std::uint64_t seed = 0;
  double achieved_rho = std::numeric_limits<double>::quiet_NaN();
  Vec achieved_margins;

  bool feasible() const {
    if (!(achieved_rho < 1.0)) return false;
    for (double m : achieved_margins)
      if (!(m > c_floor)) return false;
    return true;
  }
};

/// D_H = diag[H_i^T H_i], Nn x Nn.
inline Mat assemble_dh(const Mat& h) {
  const std::size_t n = h.cols(), N = h.rows();
  Mat d(N * n, N * n);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) d(i * n + p, i * n + q) = h(i, p) * h(i, q);
  return d;
}

/// D̄_H = diag[H_i^T], Nn x N.
inline Mat assemble_dh_bar(const Mat& h) {
  const std::size_t n = h.cols(), N = h.rows();
  Mat d(N * n, N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t p = 0; p < n; ++p) d(i * n + p, i) = h(i, p);
  return d;
}

inline Mat assemble_k(const std::vector<Mat>& blocks) { return block_diag(blocks); }

/// Column K_i H_i^T that multiplies sensor i's innovation.
inline Vec gain_column(const Mat& k_i, std::span<const double> h_i) { return k_i * h_i; }

/// H_i K_i H_i^T.
inline double own_gain(const Mat& k_i, std::span<const double> h_i) { return dot(h_i, gain_column(k_i, h_i)); }

inline Vec isolation_margins(const std::vector<Mat>& blocks, const Mat& h) {
  Vec m(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) m[i] = std::abs(1.0 - own_gain(blocks[i], h.row(i)));
  return m;
}

namespace detail {

inline void check_instance(const Mat& a, const Mat& w, const Mat& h) {
  if (!a.square() || !w.square()) throw std::invalid_argument("gain: A and W must be square");
  if (h.rows() != w.rows() || h.cols() != a.rows())
    throw std::invalid_argument("gain: H must have one row per sensor and one column per state");
}

// (I - K D_H) M where only the columns c_i = K_i H_i^T matter:
// block row i becomes M_i - c_i (H_i M_i).
inline Mat abar_from_columns(const Mat& wa, const Mat& h, const std::vector<Vec>& cols) {
  const std::size_t n = h.cols();
  Mat out = wa;
  const std::size_t nn = wa.cols();
  Vec hm(nn);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    std::fill(hm.begin(), hm.end(), 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      const double hp = h(i, p);
      if (hp == 0.0) continue;
      const auto r = wa.row(i * n + p);
      for (std::size_t c = 0; c < nn; ++c) hm[c] += hp * r[c];
    }
    for (std::size_t p = 0; p < n; ++p) {
      const double cp = cols[i][p];
      if (cp == 0.0) continue;
      auto r = out.row(i * n + p);
      for (std::size_t c = 0; c < nn; ++c) r[c] -= cp * hm[c];
    }
  }
  return out;
}

}  // namespace detail

/// Ā = (I - K D_H)(W ⊗ A).
inline Mat assemble_abar(const Mat& a, const Mat& w, const Mat& h, const std::vector<Mat>& blocks) {
  detail::check_instance(a, w, h);
  if (blocks.size() != h.rows()) throw std::invalid_argument("assemble_abar: need one gain block per sensor");
  std::vector<Vec> cols;
  cols.reserve(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].rows() != a.rows() || blocks[i].cols() != a.rows())
      throw std::invalid_argument("assemble_abar: gain blocks must be n x n");
    cols.push_back(gain_column(blocks[i], h.row(i)));
  }
  return detail::abar_from_columns(kron(w, a), h, cols);
}

inline Mat assemble_abar(const Mat& a, const Mat& w, const Mat& h, const GainSet& g) {
  return assemble_abar(a, w, h, g.blocks);
}

/// Recomputes achieved_rho and achieved_margins from the blocks.
inline void evaluate_gain(GainSet& g, const Mat& a, const Mat& w, const Mat& h) {
  g.achieved_rho = spectral_radius(assemble_abar(a, w, h, g.blocks));
  g.achieved_margins = isolation_margins(g.blocks, h);
}

enum class GainSupport {
  column,      ///< only K_i H_i^T is searched; other columns stay zero
  full_block,  ///< every entry of K_i is a search coordinate
};

struct SynthesisOptions {
  double c_floor = 0.2;
  int budget = 20000;  ///< objective evaluations
  std::uint64_t seed = 0;
  GainSupport support = GainSupport::column;
  double target_rho = 0.99;  ///< early stop once rho(Ā) is below this and margins hold
  /// When set, every own gain H_i K_i H_i^T is pinned to this value and only
  /// the remaining entries are searched.
  std::optional<double> fixed_own_gain;
  double penalty = 100.0;
  double initial_step = 0.5;
  double min_step = 1e-9;
  int grid_points = 21;
};

struct InfeasibilityReport {
  double best_rho = std::numeric_limits<double>::quiet_NaN();
  Vec margins;
  std::vector<std::size_t> violated_sensors;
  int evaluations = 0;
};

class SynthesisInfeasible : public std::runtime_error {
 public:
  SynthesisInfeasible(const std::string& what, InfeasibilityReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const InfeasibilityReport& report() const noexcept { return report_; }

 private:
  InfeasibilityReport report_;
};

struct SynthesisStats {
  int evaluations = 0;
  double stage1_own_gain = 0.0;
};

namespace detail {

// Search state: one parameter per coordinate of the searched support.
class GainSearch {
 public:
  GainSearch(const Mat& a, const Mat& w, const Mat& h, const SynthesisOptions& opt)
      : h_(h), opt_(opt), n_(a.rows()), nsens_(h.rows()), wa_(kron(w, a)) {
    // A coordinate is "own" when it feeds H_i K_i H_i^T through a unit selector.
    for (std::size_t i = 0; i < nsens_; ++i) {
      std::size_t nnz = 0;
      for (std::size_t p = 0; p < n_; ++p) nnz += h_(i, p) != 0.0;
      if (nnz == 0) throw std::invalid_argument("synthesize_gain: sensor " + std::to_string(i) + " measures nothing");
    }
    const std::size_t per = opt_.support == GainSupport::column ? n_ : n_ * n_;
    params_.assign(nsens_ * per, 0.0);
    for (std::size_t i = 0; i < nsens_; ++i)
      for (std::size_t c = 0; c < per; ++c) {
        const std::size_t j = i * per + c;
        if (!opt_.fixed_own_gain || !touches_own_gain(i, c)) free_.push_back(j);
      }
  }

  std::vector<double>& params() { return params_; }
  const std::vector<std::size_t>& free_coordinates() const { return free_; }

  std::vector<Mat> blocks(const std::vector<double>& p) const {
    std::vector<Mat> out(nsens_, Mat(n_, n_));
    for (std::size_t i = 0; i < nsens_; ++i) {
      if (opt_.support == GainSupport::column) {
        // column parameters spread over H_i^T: K_i = c h_i / |h_i|^2
        const double hh = dot(h_.row(i), h_.row(i));
        for (std::size_t r = 0; r < n_; ++r)
          for (std::size_t c = 0; c < n_; ++c) out[i](r, c) = p[i * n_ + r] * h_(i, c) / hh;
      } else {
        for (std::size_t r = 0; r < n_; ++r)
          for (std::size_t c = 0; c < n_; ++c) out[i](r, c) = p[i * n_ * n_ + r * n_ + c];
      }
    }
    return out;
  }

  // Sets every K_i to kappa * H_i^T H_i / |H_i|^4 so that H_i K_i H_i^T = kappa.
  void set_own_gain(double kappa) {
    std::fill(params_.begin(), params_.end(), 0.0);
    for (std::size_t i = 0; i < nsens_; ++i) {
      const double hh = dot(h_.row(i), h_.row(i));
      for (std::size_t r = 0; r < n_; ++r) {
        if (opt_.support == GainSupport::column) {
          params_[i * n_ + r] = kappa * h_(i, r) / hh;
        } else {
          for (std::size_t c = 0; c < n_; ++c) params_[i * n_ * n_ + r * n_ + c] = kappa * h_(i, r) * h_(i, c) / (hh * hh);
        }
      }
    }
  }

  struct Eval {
    double objective;
    double rho;
    double violation;
  };

  Eval evaluate(const std::vector<double>& p) {
    ++evaluations_;
    std::vector<Vec> cols(nsens_, Vec(n_, 0.0));
    Vec kappa(nsens_, 0.0);
    for (std::size_t i = 0; i < nsens_; ++i) {
      if (opt_.support == GainSupport::column) {
        for (std::size_t r = 0; r < n_; ++r) cols[i][r] = p[i * n_ + r];
      } else {
        for (std::size_t r = 0; r < n_; ++r)
          for (std::size_t c = 0; c < n_; ++c) cols[i][r] += p[i * n_ * n_ + r * n_ + c] * h_(i, c);
      }
      kappa[i] = dot(h_.row(i), cols[i]);
    }
    double viol = 0.0;
    for (double k : kappa) {
      const double short_by = opt_.c_floor * (1.0 + 1e-6) - std::abs(1.0 - k);
      if (short_by > 0.0) viol += short_by * short_by;
      if (k < 0.0) viol += k * k;
    }
    double rho = std::numeric_limits<double>::infinity();
    try {
      rho = spectral_radius_qr(abar_from_columns(wa_, h_, cols));
    } catch (const NonConvergence&) {
    }
    return {rho + opt_.penalty * viol, rho, viol};
  }

  int evaluations() const { return evaluations_; }

 private:
  bool touches_own_gain(std::size_t i, std::size_t c) const {
    if (opt_.support == GainSupport::column) return h_(i, c) != 0.0;
    return h_(i, c / n_) != 0.0 && h_(i, c % n_) != 0.0;
  }

  const Mat& h_;
  const SynthesisOptions& opt_;
  std::size_t n_, nsens_;
  Mat wa_;
  std::vector<double> params_;
  std::vector<std::size_t> free_;
  int evaluations_ = 0;
};

}  // namespace detail

/// Derivative-free search for a block-diagonal K with rho(Ā) < 1 and every
/// |1 - H_i K_i H_i^T| > c_floor. Stage 1 grids a common own gain over [0, 1]
/// (or uses the pinned value); stage 2 runs seeded coordinate descent with
/// halving steps. Own gains are kept nonnegative. Throws SynthesisInfeasible
/// when the budget runs out without a feasible gain.
inline GainSet synthesize_gain(const Mat& a, const Mat& w, const Mat& h, const SynthesisOptions& opt,
                               SynthesisStats* stats = nullptr) {
  detail::check_instance(a, w, h);
  if (opt.budget <= 0) throw std::invalid_argument("synthesize_gain: budget must be positive");
  if (opt.fixed_own_gain && !(*opt.fixed_own_gain >= 0.0))
    throw std::invalid_argument("synthesize_gain: pinned own gain must be nonnegative");
  detail::GainSearch search(a, w, h, opt);

  // The soft penalty can settle just outside an active margin constraint, so
  // the best strictly feasible point seen is kept as a fallback.
  std::optional<std::vector<double>> feasible_params;
  double feasible_rho = std::numeric_limits<double>::infinity();
  auto evaluate = [&](const std::vector<double>& params) {
    const auto e = search.evaluate(params);
    if (e.violation == 0.0 && e.rho < feasible_rho) {
      feasible_rho = e.rho;
      feasible_params = params;
    }
    return e;
  };

  // stage 1
  double best_kappa = 0.0;
  auto best = evaluate(search.params());
  if (opt.fixed_own_gain) {
    best_kappa = *opt.fixed_own_gain;
    search.set_own_gain(best_kappa);
    best = evaluate(search.params());
  } else {
    std::vector<double> best_params = search.params();
    for (int g = 0; g < opt.grid_points; ++g) {
      const double kappa = opt.grid_points == 1 ? 0.0 : static_cast<double>(g) / (opt.grid_points - 1);
      search.set_own_gain(kappa);
      const auto e = evaluate(search.params());
      if (e.objective < best.objective) {
        best = e;
        best_kappa = kappa;
        best_params = search.params();
      }
    }
    search.params() = best_params;
  }

  // stage 2
  GaussianSampler rng(opt.seed, 2);
  auto& p = search.params();
  std::vector<std::size_t> order = search.free_coordinates();
  auto done = [&](const detail::GainSearch::Eval& e) { return e.violation == 0.0 && e.rho < opt.target_rho; };
  double step = opt.initial_step;
  while (search.evaluations() < opt.budget && step > opt.min_step && !done(best) && !order.empty()) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
      std::swap(order[i - 1], order[j]);
    }
    bool improved = false;
    for (std::size_t j : order) {
      for (double d : {step, -step}) {
        const double saved = p[j];
        p[j] = saved + d;
        const auto e = evaluate(p);
        if (e.objective < best.objective) {
          best = e;
          improved = true;
          break;
        }
        p[j] = saved;
      }
      if (done(best) || search.evaluations() >= opt.budget) break;
    }
    if (!improved) step *= 0.5;
  }

  if (best.violation > 0.0 && feasible_params) p = *feasible_params;
  GainSet g;
  g.blocks = search.blocks(p);
  g.c_floor = opt.c_floor;
  g.seed = opt.seed;
  evaluate_gain(g, a, w, h);
  if (stats) {
    stats->evaluations = search.evaluations();
    stats->stage1_own_gain = best_kappa;
  }
  if (!g.feasible()) {
    InfeasibilityReport rep;
    rep.best_rho = g.achieved_rho;
    rep.margins = g.achieved_margins;
    rep.evaluations = search.evaluations();
    for (std::size_t i = 0; i < g.achieved_margins.size(); ++i)
      if (!(g.achieved_margins[i] > opt.c_floor)) rep.violated_sensors.push_back(i);
    std::string msg = "synthesize_gain: no feasible gain within " + std::to_string(opt.budget) +
                      " evaluations (best rho " + std::to_string(rep.best_rho) + ", " +
                      std::to_string(rep.violated_sensors.size()) + " margin violations)";
    throw SynthesisInfeasible(msg, std::move(rep));
  }
  return g;
}

inline nlohmann::json gain_to_json(const GainSet& g) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : g.blocks) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < b.rows(); ++r) {
      const auto row = b.row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    blocks.push_back(std::move(rows));
  }
  return {{"blocks", std::move(blocks)}, {"c_floor", g.c_floor}, {"seed", g.seed}};
}

/// Parses blocks from JSON and recomputes rho and margins against the instance.
inline GainSet gain_from_json(const nlohmann::json& j, const Mat& a, const Mat& w, const Mat& h) {
  detail::check_instance(a, w, h);
  GainSet g;
  try {
    const auto& blocks = j.at("blocks");
    if (!blocks.is_array()) throw SchemaError("gain file: blocks must be an array");
    if (blocks.size() != h.rows())
      throw std::invalid_argument("gain file: " + std::to_string(blocks.size()) + " blocks for " +
                                  std::to_string(h.rows()) + " sensors");
    const std::size_t n = a.rows();
    for (const auto& b : blocks) {
      if (!b.is_array() || b.size() != n) throw std::invalid_argument("gain file: block must have n rows");
      std::vector<double> entries;
      entries.reserve(n * n);
      for (const auto& row : b) {
        if (!row.is_array() || row.size() != n) throw std::invalid_argument("gain file: block must have n columns");
        for (const auto& v : row) entries.push_back(v.get<double>());
      }
      g.blocks.emplace_back(n, n, std::move(entries));
    }
    g.c_floor = j.at("c_floor").get<double>();
    g.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("gain file: ") + e.what());
  }
  evaluate_gain(g, a, w, h);
  return g;
}

inline void save_gain(const GainSet& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_gain: cannot open " + path);
  out << gain_to_json(g).dump(2) << '\n';
  if (!out) throw std::runtime_error("save_gain: write failed for " + path);
}

inline GainSet load_gain(const std::string& path, const Mat& a, const Mat& w, const Mat& h) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_gain: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("load_gain: " + path + ": " + e.what());
  }
  return gain_from_json(j, a, w, h);
}

}  // namespace dchi
