#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dchi/chidetect.hpp"
#include "dchi/errors.hpp"
#include "dchi/estimator.hpp"
#include "dchi/gainsynth.hpp"
#include "dchi/harness/config.hpp"
#include "dchi/netgraph.hpp"
#include "dchi/random.hpp"
#include "dchi/sysmodel.hpp"

namespace dchi::harness {

// Sampler streams. Instance draws use the system seed; each replication owns
// four streams of the run seed so that attacked and clean runs share noise.
inline constexpr std::uint32_t kStreamA = 0;
inline constexpr std::uint32_t kStreamW = 1;
inline constexpr std::uint32_t kStreamReplicationBase = 16;

struct ReplicationStreams {
  GaussianSampler initial;
  GaussianSampler process;
  GaussianSampler measurement;
  GaussianSampler attack;

  ReplicationStreams(std::uint64_t seed, std::size_t rep)
      : initial(seed, stream(rep, 0)),
        process(seed, stream(rep, 1)),
        measurement(seed, stream(rep, 2)),
        attack(seed, stream(rep, 3)) {}

 private:
  static std::uint32_t stream(std::size_t rep, std::uint32_t k) {
    return kStreamReplicationBase + static_cast<std::uint32_t>(4 * rep) + k;
  }
};

struct Scenario {
  ScenarioConfig cfg;
  SocialSystem system;
  Digraph sensor_graph;
  Mat w;
  SensingPattern pattern;
  SensorSuite sensors;
};

inline Scenario build_scenario(const ScenarioConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.system.n;
  const std::size_t N = cfg.sensors.assignments.size();
  const Digraph state_graph(n, cfg.system.edges);
  const Mat q = cfg.system.q ? *cfg.system.q : Mat::identity(n) * *cfg.system.q_scale;

  Mat a;
  if (cfg.system.a) {
    a = *cfg.system.a;
  } else {
    GaussianSampler sa(cfg.system.seed, kStreamA);
    a = make_random_a(state_graph, cfg.system.target_rho, sa);
  }
  const Digraph graph_of_a = Digraph::from_pattern(a);
  // an explicit A defines its own state graph
  SocialSystem sys = cfg.system.a ? SocialSystem(a, q, graph_of_a) : SocialSystem(a, q, state_graph);

  Digraph gn = cfg.sensors.network ? Digraph(N, *cfg.sensors.network) : Digraph::cycle(N);
  Mat w;
  if (cfg.sensors.w) {
    w = *cfg.sensors.w;
    gn = Digraph::from_pattern(w);
  } else if (cfg.sensors.random_weights) {
    GaussianSampler sw(cfg.system.seed, kStreamW);
    w = build_row_stochastic_w(gn, sw);
  } else {
    w = build_row_stochastic_w(gn);
  }

  SensingPattern sp = sensing_pattern(cfg);
  SensorSuite suite = SensorSuite::from_pattern(sp, n, cfg.sensors.r);
  return {cfg, std::move(sys), std::move(gn), std::move(w), std::move(sp), std::move(suite)};
}

struct CheckReport {
  bool structurally_full_rank = false;
  std::optional<Lemma1Report> lemma1;  ///< empty when the SCC test does not apply
  bool lemma2 = false;
  std::optional<bool> observable;  ///< empty when the instance exceeds the numeric size cap
  std::vector<std::string> notes;

  bool passed() const { return lemma1 && lemma1->satisfied && lemma2 && observable.value_or(true); }
};

inline CheckReport check_scenario(const Scenario& sc) {
  CheckReport rep;
  const Digraph g = sc.system.graph().with_self_loops();
  rep.structurally_full_rank = is_structurally_full_rank(g);
  try {
    rep.lemma1 = check_lemma1(g, sc.pattern);
  } catch (const LemmaInapplicable& e) {
    rep.notes.emplace_back(e.what());
  }
  rep.lemma2 = check_lemma2(sc.sensor_graph);
  try {
    rep.observable = verify_distributed_observability(sc.system.a(), sc.w, assemble_dh(sc.sensors.h()));
  } catch (const InstanceTooLarge& e) {
    rep.notes.emplace_back(e.what());
  }
  return rep;
}

inline std::string describe(const CheckReport& rep) {
  std::string s;
  s += "structural rank: " + std::string(rep.structurally_full_rank ? "full" : "deficient") + "\n";
  if (rep.lemma1) {
    s += "SCC coverage: " + std::string(rep.lemma1->satisfied ? "pass" : "FAIL") + " (" +
         std::to_string(rep.lemma1->components.size()) + " components)\n";
    for (std::size_t c : rep.lemma1->uncovered) {
      s += "  unsensed component:";
      for (std::size_t v : rep.lemma1->components[c]) s += " " + std::to_string(v);
      s += "\n";
    }
  } else {
    s += "SCC coverage: not applicable\n";
  }
  s += "sensor network strongly connected: " + std::string(rep.lemma2 ? "pass" : "FAIL") + "\n";
  if (rep.observable)
    s += "numeric distributed observability: " + std::string(*rep.observable ? "pass" : "FAIL") + "\n";
  else
    s += "numeric distributed observability: skipped\n";
  for (const auto& note : rep.notes) s += "note: " + note + "\n";
  return s;
}

class CheckFailed : public std::runtime_error {
 public:
  CheckFailed(const std::string& what, CheckReport report) : std::runtime_error(what), report_(std::move(report)) {}
  const CheckReport& report() const noexcept { return report_; }

 private:
  CheckReport report_;
};

inline SynthesisOptions synthesis_options(const GainBlock& g) {
  SynthesisOptions o;
  o.c_floor = g.c_floor;
  o.budget = g.budget;
  o.seed = g.seed;
  o.support = g.support;
  o.target_rho = g.target_rho;
  o.fixed_own_gain = g.own_gain;
  return o;
}

/// Everything fixed before simulation: scenario, gain, variance levels, thresholds.
struct Instance {
  Scenario scenario;
  CheckReport checks;
  GainSet gain;
  SynthesisStats synthesis;
  Mat abar;
  VarianceAnalysis variance;
  std::vector<Threshold> thresholds;
};

/// Runs the structural checks (throwing CheckFailed), obtains the gain, and
/// derives Λ_i and the thresholds.
inline Instance prepare_instance(const ScenarioConfig& cfg) {
  Scenario sc = build_scenario(cfg);
  CheckReport checks = check_scenario(sc);
  if (!checks.passed()) throw CheckFailed("structural checks failed:\n" + describe(checks), checks);
  const Mat& a = sc.system.a();
  const Mat& h = sc.sensors.h();
  GainSet gain;
  SynthesisStats stats;
  if (cfg.gain.file) {
    gain = load_gain(*cfg.gain.file, a, sc.w, h);
  } else {
    gain = synthesize_gain(a, sc.w, h, synthesis_options(cfg.gain), &stats);
  }
  Mat abar = assemble_abar(a, sc.w, h, gain);
  VarianceAnalysis va =
      analyze_variance(abar, assemble_k(gain.blocks), h, sc.system.q(), sc.sensors.r(), cfg.detector.variance);
  auto thresholds = make_thresholds(cfg.detector.fars, cfg.detector.window);
  return {std::move(sc), std::move(checks), std::move(gain), stats, std::move(abar), std::move(va),
          std::move(thresholds)};
}

struct ReplicationTrace {
  std::vector<Vec> truth;                  ///< k = 0..steps
  std::vector<std::vector<Vec>> estimates;  ///< [k][sensor], k = 0..steps
  std::vector<Vec> mse;                    ///< [k][sensor], k = 0..steps
  std::vector<Vec> residuals;              ///< [k-1][sensor], k = 1..steps
  std::vector<Verdict> verdicts;           ///< warm steps only, step-major
  bool any_h1 = false;
};

struct TraceOptions {
  bool keep_truth = true;
  bool keep_estimates = true;
};

/// One run of the estimator and detector against simulated truth.
inline ReplicationTrace simulate_replication(const Instance& inst, const AttackSchedule& attacks, std::size_t rep,
                                             std::size_t steps, std::uint64_t run_seed, TraceOptions opt = {}) {
  const auto& sc = inst.scenario;
  const std::size_t n = sc.system.n();
  const std::size_t N = sc.sensors.sensor_count();
  const Mat& h = sc.sensors.h();
  ReplicationStreams rs(run_seed, rep);
  ChiSquareDetector det(inst.variance.chosen.lambda, sc.cfg.detector.window, inst.thresholds);

  ReplicationTrace tr;
  Vec x = rs.initial.standard_normal_vec(n);
  EstimatorState st = EstimatorState::zeros(N, n);
  auto record = [&]() {
    if (opt.keep_truth) tr.truth.push_back(x);
    if (opt.keep_estimates) tr.estimates.push_back(st.posteriors);
    tr.mse.push_back(mse_per_sensor(x, st));
  };
  record();
  for (std::size_t k = 1; k <= steps; ++k) {
    x = step_truth(sc.system, x, rs.process);
    const Vec y = measure(sc.sensors, attacks, x, k, rs.measurement, rs.attack);
    predict(st, sc.w, sc.system.a());
    correct(st, inst.gain, y, h);
    const auto res = residual(st, y, h);
    Vec row(N);
    for (const auto& r : res) {
      row[r.sensor] = r.value;
      if (auto v = det.update(r)) {
        tr.any_h1 = tr.any_h1 || v->any_h1();
        tr.verdicts.push_back(std::move(*v));
      }
    }
    tr.residuals.push_back(std::move(row));
    record();
  }
  return tr;
}

}  // namespace dchi::harness
