// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "fig2_eval.hpp"

using namespace dchi;
using namespace dchi::harness;

namespace {

struct Line {
  std::string id;
  bool pass;
  std::string detail;
};

std::vector<Line> g_lines;

std::string f(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

void report(const std::string& id, bool pass, const std::string& detail, double seconds) {
  g_lines.push_back({id, pass, detail});
  std::printf("%s %s  %s  (%.1f s)\n", id.c_str(), pass ? "PASS" : "FAIL", detail.c_str(), seconds);
  std::fflush(stdout);
}

void timed(const std::string& id, const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  std::string detail;
  try {
    std::tie(pass, detail) = body();
  } catch (const std::exception& e) {
    pass = false;
    detail = std::string("exception: ") + e.what();
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(id, pass, detail, s);
}

Mat random_mat(GaussianSampler& s, std::size_t r, std::size_t c) {
  Mat m(r, c);
  for (auto& v : m.data()) v = s.standard_normal();
  return m;
}

std::size_t pick(GaussianSampler& s, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(s.uniform() * static_cast<double>(hi - lo + 1));
}

Digraph random_graph(GaussianSampler& s, std::size_t n, double p) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && s.uniform() < p) e.push_back({i, j});
  return Digraph(n, e);
}

Mat random_weights_on(const Digraph& g, GaussianSampler& s) {
  Mat a(g.node_count(), g.node_count());
  const Digraph looped = g.with_self_loops();
  for (const auto& e : looped.edges()) a(e.to, e.from) = s.uniform_open_closed(0.1, 1.0);
  return a;
}

Mat selector(const SensingPattern& sp, std::size_t n) {
  Mat h(sp.sensor_count(), n);
  for (std::size_t i = 0; i < sp.sensor_count(); ++i) h(i, sp.state_of_sensor[i]) = 1.0;
  return h;
}

// ---------------------------------------------------------------- A1

std::pair<bool, std::string> a1() {
  const double t1 = threshold_from_far(0.05, 12);
  const double t2 = threshold_from_far(0.35, 12);
  const bool ok = t1 >= 20.9 && t1 <= 21.2 && t2 >= 13.2 && t2 <= 13.45;
  return {ok, "theta(0.05,12)=" + f(t1, 8) + " in [20.9,21.2], theta(0.35,12)=" + f(t2, 8) + " in [13.2,13.45]"};
}

// ---------------------------------------------------------------- A2

std::pair<bool, std::string> a2() {
  double closed = 0.0, quant = 0.0, round = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double x = 0.05 + 0.2 * i;
    closed = std::max(closed, std::abs(reg_lower_gamma(1.0, x) - (1.0 - std::exp(-x))));
    const double p = 0.005 + 0.0099 * i;
    quant = std::max(quant, std::abs(threshold_from_far(p, 2) + 2.0 * std::log(p)));
  }
  for (std::size_t t = 1; t <= 64; ++t)
    for (int k = 1; k <= 99; ++k) {
      const double p = 0.01 * k;
      round = std::max(round, std::abs(chi2_sf(threshold_from_far(p, t), static_cast<double>(t)) - p));
    }
  const bool ok = closed < 1e-9 && quant < 1e-9 && round < 1e-8;
  return {ok, "P(1,x) err " + f(closed) + ", T=2 quantile err " + f(quant) + " (tol 1e-9); round-trip err " +
                  f(round) + " over p=0.01..0.99, T=1..64 (tol 1e-8)"};
}

// ---------------------------------------------------------------- A3

struct ObsInstance {
  Mat a, w, h;
};

ObsInstance draw_checked_instance(GaussianSampler& s) {
  for (;;) {
    const std::size_t n = pick(s, 2, 5), N = pick(s, 1, 4);
    const Digraph g = random_graph(s, n, 0.35);
    SensingPattern sp;
    for (std::size_t i = 0; i < N; ++i) sp.state_of_sensor.push_back(pick(s, 0, n - 1));
    if (!check_lemma1(g.with_self_loops(), sp).satisfied) continue;
    Digraph gn = random_graph(s, N, 0.5);
    if (!check_lemma2(gn)) continue;
    return {random_weights_on(g, s), build_row_stochastic_w(gn, s), selector(sp, n)};
  }
}

std::pair<bool, std::string> a3() {
  GaussianSampler s(3003);
  int full = 0, retried = 0;
  for (int t = 0; t < 50; ++t) {
    ObsInstance inst = draw_checked_instance(s);
    bool ok = verify_distributed_observability(inst.a, inst.w, assemble_dh(inst.h));
    if (!ok) {
      // redraw the continuous weights on the same patterns
      ++retried;
      const Digraph g = Digraph::from_pattern(inst.a), gn = Digraph::from_pattern(inst.w);
      inst.a = random_weights_on(g, s);
      inst.w = build_row_stochastic_w(gn, s);
      ok = verify_distributed_observability(inst.a, inst.w, assemble_dh(inst.h));
    }
    full += ok;
  }

  int deficient = 0;
  for (int t = 0; t < 10; ++t) {
    Mat a, w, h;
    if (t < 5) {
      // uncovered SCC: states {2, 3} form a group nobody reads and nobody senses
      const Digraph g(4, {{0, 1}, {1, 0}, {2, 3}, {3, 2}, {1, 2}});
      a = random_weights_on(g, s);
      const Digraph gn = Digraph::cycle(2);
      w = build_row_stochastic_w(gn, s);
      h = selector(SensingPattern{{0, 1}}, 4);
    } else {
      // reducible W: sensor 0 hears nobody and its own state group is disjoint from the rest
      const Digraph g(4, {{0, 1}, {1, 0}, {2, 3}, {3, 2}});
      a = random_weights_on(g, s);
      const Digraph gn(2, {{0, 1}});
      w = build_row_stochastic_w(gn, s);
      h = selector(SensingPattern{{0, 2}}, 4);
    }
    deficient += !verify_distributed_observability(a, w, assemble_dh(h));
  }
  const bool ok = full >= 49 && deficient == 10;
  return {ok, "full rank " + std::to_string(full) + "/50 (need >= 49, " + std::to_string(retried) +
                  " weight redraws); violations deficient " + std::to_string(deficient) + "/10"};
}

// ---------------------------------------------------------------- A4, A5, A6 share the preset

std::pair<bool, std::string> a4_synthetic() {
  CalibrationOptions o;
  o.lambda = 4.88;
  o.window = 12;
  o.windows = 10000;
  o.seed = 4004;
  bool ok = true;
  std::string d = "synthetic:";
  for (const auto& row : far_calibrate(o)) {
    const double sigma = std::sqrt(row.far * (1 - row.far) / static_cast<double>(row.windows));
    const bool in = std::abs(row.rate - row.far) <= 3 * sigma;
    ok = ok && in;
    d += " p=" + f(row.far) + " rate " + f(row.rate) + " (3sigma " + f(3 * sigma, 3) + ")";
  }
  return {ok, d};
}

std::pair<bool, std::string> a4_end_to_end(const fig2::Outcome& out) {
  bool ok = true;
  std::string d = "attack-free runs:";
  const auto& th = out.inst.thresholds;
  for (std::size_t j = 0; j < th.size(); ++j) {
    double worst = 0.0;
    std::size_t windows = 0;
    for (std::size_t s = 0; s < out.clean.after_windows.size(); ++s) {
      const double bound = binomial_upper(th[j].far, out.clean.after_windows[s]);
      ok = ok && out.clean.after_rate(j, s) <= bound;
      worst = std::max(worst, out.clean.after_rate(j, s));
      windows = out.clean.after_windows[s];
    }
    d += " p=" + f(th[j].far) + " max rate " + f(worst) + " <= " + f(binomial_upper(th[j].far, windows));
  }
  return {ok, d};
}

std::pair<bool, std::string> a5(const fig2::Outcome& out) {
  const Instance& inst = out.inst;
  const GainSet& g = inst.gain;
  const Mat& a = inst.scenario.system.a();
  const Mat& h = inst.scenario.sensors.h();
  const double rho = spectral_radius(assemble_abar(a, inst.scenario.w, h, g));
  const Vec margins = isolation_margins(g.blocks, h);
  bool ok = rho < 1.0;
  double min_margin = margins.empty() ? 0.0 : *std::min_element(margins.begin(), margins.end());
  ok = ok && min_margin > 0.2;

  // Attack-free estimator run, re-centred on the truth after every step so that
  // the unstable state (rho(A) = 1.1) does not swamp the error in floating point.
  const std::size_t n = a.rows(), N = h.rows(), steps = 1000;
  ReplicationStreams rs(5005, 0);
  const AttackSchedule none;
  Vec x = rs.initial.standard_normal_vec(n);
  EstimatorState st = EstimatorState::zeros(N, n);
  std::vector<double> mse;
  for (std::size_t k = 1; k <= steps; ++k) {
    x = step_truth(inst.scenario.system, x, rs.process);
    const Vec y = measure(inst.scenario.sensors, none, x, k, rs.measurement, rs.attack);
    predict(st, inst.scenario.w, a);
    correct(st, g, y, h);
    const Vec m = mse_per_sensor(x, st);
    mse.push_back(*std::max_element(m.begin(), m.end()));
    for (auto& post : st.posteriors)
      for (std::size_t p = 0; p < n; ++p) post[p] -= x[p];
    std::fill(x.begin(), x.end(), 0.0);
  }
  std::vector<double> tail(mse.end() - 200, mse.end());
  const double mx = *std::max_element(tail.begin(), tail.end());
  std::nth_element(tail.begin(), tail.begin() + 100, tail.end());
  const double med = tail[100];
  const bool bounded = std::isfinite(mx) && mx < 10.0 * med;
  ok = ok && bounded;
  return {ok, "rho(Abar)=" + f(rho) + " < 1, min margin " + f(min_margin) + " > 0.2, " +
                  std::to_string(inst.synthesis.evaluations) + " evaluations; MSE last 200: max " + f(mx) +
                  " < 10 x median " + f(med)};
}

std::pair<bool, std::string> a6(const fig2::Outcome& out) {
  const auto& at = out.attacked;
  const auto& th = out.inst.thresholds;
  const std::size_t strict = 0, loose = 1;
  bool ok = true;
  std::string d;
  for (std::size_t s : {std::size_t{0}, std::size_t{2}}) {
    const double before = at.before_rate(loose, s), after = at.after_rate(loose, s);
    const bool rise = after > 3.0 * before && after > 0.0;
    ok = ok && rise;
    d += "attacked s" + std::to_string(s) + " theta2 before " + f(before, 3) + " after " + f(after, 3) + "; ";
  }
  for (std::size_t s : {std::size_t{1}, std::size_t{3}}) {
    for (std::size_t j = 0; j < th.size(); ++j) {
      const double rate = at.after_rate(j, s);
      const double bound = binomial_upper(th[j].far, at.after_windows[s]);
      ok = ok && rate <= bound;
      if (j == loose) d += "clean s" + std::to_string(s) + " after " + f(rate, 3) + " <= " + f(bound, 3) + "; ";
    }
  }
  const double s0 = at.after_rate(strict, 0), s2 = at.after_rate(strict, 2);
  ok = ok && s0 > s2;
  d += "theta1 s0 " + f(s0, 3) + " > s2 " + f(s2, 3);
  return {ok, d};
}

// ---------------------------------------------------------------- A7

std::pair<bool, std::string> a7() {
  GaussianSampler s(7007);
  double worst = 0.0;
  int done = 0;
  while (done < 10) {
    const std::size_t n = pick(s, 2, 5), N = pick(s, 1, 4);
    const Digraph g = random_graph(s, n, 0.4);
    Mat a = random_weights_on(g, s);
    a *= 1.0 / spectral_radius(a);
    const Mat w = build_row_stochastic_w(Digraph::cycle(N), s);
    SensingPattern sp;
    for (std::size_t i = 0; i < N; ++i) sp.state_of_sensor.push_back(pick(s, 0, n - 1));
    const Mat h = selector(sp, n);
    GainSet gain;
    for (std::size_t i = 0; i < N; ++i) gain.blocks.push_back(random_mat(s, n, n) * 0.3);
    const Mat abar = assemble_abar(a, w, h, gain);
    const Mat k = assemble_k(gain.blocks);
    const Mat ikd = Mat::identity(N * n) - k * assemble_dh(h);
    const Mat kdb = k * assemble_dh_bar(h);

    const SocialSystem sys(a, Mat::identity(n) * 0.06, g);
    const SensorSuite suite(h, Vec(N, 0.06));
    const AttackSchedule atk({{0, 30, std::nullopt, 0.2, 0.5}});
    GaussianSampler proc(700 + done, 1), noise(700 + done, 2), attack(700 + done, 3);
    Vec x = s.standard_normal_vec(n);
    EstimatorState st = EstimatorState::zeros(N, n);
    Vec e = stacked_error(x, st);
    for (std::size_t step = 1; step <= 100; ++step) {
      const Vec ax = a * x;
      x = step_truth(sys, x, proc);
      const Vec y = measure(suite, atk, x, step, noise, attack);
      predict(st, w, a);
      correct(st, gain, y, h);

      Vec ones_nu, dist(N);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t p = 0; p < n; ++p) ones_nu.push_back(x[p] - ax[p]);
      for (std::size_t i = 0; i < N; ++i) dist[i] = y[i] - dot(h.row(i), x);
      const Vec drive = ikd * ones_nu, meas = kdb * dist;
      Vec next = abar * e;
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += drive[i] - meas[i];
      e = std::move(next);
      const Vec direct = stacked_error(x, st);
      for (std::size_t i = 0; i < e.size(); ++i)
        worst = std::max(worst, std::abs(e[i] - direct[i]) / std::max(1.0, std::abs(direct[i])));
    }
    ++done;
  }
  return {worst < 1e-10, "max deviation " + f(worst) + " over 10 instances x 100 steps (tol 1e-10)"};
}

// ---------------------------------------------------------------- A8

std::pair<bool, std::string> a8(const Instance& inst) {
  GaussianSampler s(8008);
  double worst_res = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = pick(s, 2, 12);
    Mat abar = random_mat(s, n, n);
    abar *= (0.3 + 0.65 * s.uniform()) / spectral_radius(abar);
    const Mat l = random_mat(s, n, n);
    const Mat sigma = l * l.transpose();
    const Mat xi = solve_discrete_lyapunov(abar, sigma);
    const double res = two_norm(xi - abar * xi * abar.transpose() - sigma);
    worst_res = std::max(worst_res, res);
  }

  // Monte Carlo on the preset error recursion driven by process and measurement noise.
  const Mat& h = inst.scenario.sensors.h();
  const Mat& q = inst.scenario.system.q();
  const Vec& r = inst.scenario.sensors.r();
  const std::size_t n = h.cols(), N = h.rows(), dim = n * N;
  const Mat k = assemble_k(inst.gain.blocks);
  const Mat ikd = Mat::identity(dim) - k * assemble_dh(h);
  const Mat kdb = k * assemble_dh_bar(h);
  Mat xi;
  compute_phi_lyapunov(inst.abar, attack_free_noise_cov(k, h, q, r), h, r, &xi);

  GaussianSampler mc(8009, 1);
  const Mat ql = cholesky_psd(q);
  const Vec zero(n, 0.0);
  Vec e(dim, 0.0);
  Mat acc(dim, dim);
  const std::size_t burn = 1000, steps = 100000;
  for (std::size_t step = 0; step < burn + steps; ++step) {
    const Vec nu = mc.sample(zero, ql);
    Vec ones_nu;
    for (std::size_t i = 0; i < N; ++i) ones_nu.insert(ones_nu.end(), nu.begin(), nu.end());
    Vec eta(N);
    for (std::size_t i = 0; i < N; ++i) eta[i] = std::sqrt(r[i]) * mc.standard_normal();
    const Vec drive = ikd * ones_nu, meas = kdb * eta;
    Vec next = inst.abar * e;
    for (std::size_t i = 0; i < dim; ++i) next[i] += drive[i] - meas[i];
    e = std::move(next);
    if (step < burn) continue;
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) acc(i, j) += e[i] * e[j];
  }
  acc *= 1.0 / static_cast<double>(steps);
  double worst_rel = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const Mat want = xi.block(i * n, i * n, n, n);
    const Mat got = acc.block(i * n, i * n, n, n);
    worst_rel = std::max(worst_rel, frobenius_norm(got - want) / frobenius_norm(want));
  }
  const bool ok = worst_res < 1e-8 && worst_rel < 0.10;
  return {ok, "Lyapunov residual max " + f(worst_res) + " (tol 1e-8) on 20 instances; Monte Carlo diagonal blocks rel err " +
                  f(worst_rel) + " (tol 0.10, 1e5 steps)"};
}

}  // namespace

int main() {
  std::printf("acceptance run on preset paper-fig2\n");
  timed("A1", a1);
  timed("A2", a2);
  timed("A3", a3);

  const ScenarioConfig cfg = paper_fig2_preset();
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<fig2::Outcome> out;
  std::string prep_error;
  try {
    out = fig2::run(cfg, cfg.run.replications);
  } catch (const std::exception& e) {
    prep_error = e.what();
  }
  const double prep = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("   preset: synthesis + %zu clean/attacked replications in %.1f s\n", cfg.run.replications, prep);

  timed("A4", [&]() -> std::pair<bool, std::string> {
    const auto syn = a4_synthetic();
    if (!out) return {false, syn.second + "; preset failed: " + prep_error};
    const auto e2e = a4_end_to_end(*out);
    return {syn.first && e2e.first, syn.second + "; " + e2e.second};
  });
  timed("A5", [&]() -> std::pair<bool, std::string> {
    if (!out) return {false, "preset failed: " + prep_error};
    return a5(*out);
  });
  timed("A6", [&]() -> std::pair<bool, std::string> {
    if (!out) return {false, "preset failed: " + prep_error};
    return a6(*out);
  });
  timed("A7", a7);
  timed("A8", [&]() -> std::pair<bool, std::string> {
    if (!out) return {false, "preset failed: " + prep_error};
    return a8(out->inst);
  });

  std::size_t failed = 0;
  for (const auto& l : g_lines) failed += !l.pass;
  std::printf("%zu/%zu criteria passed\n", g_lines.size() - failed, g_lines.size());
  return failed == 0 ? 0 : 1;
}
