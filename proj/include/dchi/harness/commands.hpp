#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dchi/chidetect.hpp"
#include "dchi/harness/config.hpp"
#include "dchi/harness/io.hpp"
#include "dchi/harness/metrics.hpp"
#include "dchi/harness/pipeline.hpp"
#include "dchi/random.hpp"

namespace dchi::harness {

namespace fs = std::filesystem;

inline json variance_to_json(const VarianceBound& vb) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"method", std::string(to_string(vb.method))},
          {"phi", num(vb.phi)},
          {"lambda", vb.lambda},
          {"b", num(vb.b)},
          {"a1", num(vb.a1)},
          {"a2", num(vb.a2)},
          {"a3", num(vb.a3)}};
}

inline json thresholds_to_json(const std::vector<Threshold>& ths, std::size_t t) {
  json out = json::array();
  for (const auto& th : ths) out.push_back({{"p", th.far}, {"T", t}, {"theta", th.theta}});
  return out;
}

inline json check_to_json(const CheckReport& rep) {
  json j = {{"structurally_full_rank", rep.structurally_full_rank},
            {"sensor_network_strongly_connected", rep.lemma2},
            {"notes", rep.notes}};
  if (rep.lemma1) {
    json comps = json::array();
    for (const auto& c : rep.lemma1->components) comps.push_back(c);
    json uncovered = json::array();
    for (std::size_t c : rep.lemma1->uncovered) uncovered.push_back(rep.lemma1->components[c]);
    j["scc_coverage"] = {{"satisfied", rep.lemma1->satisfied}, {"components", comps}, {"uncovered", uncovered}};
  } else {
    j["scc_coverage"] = nullptr;
  }
  j["observable"] = rep.observable ? json(*rep.observable) : json(nullptr);
  j["passed"] = rep.passed();
  return j;
}

inline json instance_metadata(const Instance& inst) {
  const auto& cfg = inst.scenario.cfg;
  json j;
  j["config"] = to_json(cfg);
  j["seeds"] = {{"system", cfg.system.seed}, {"gain", cfg.gain.seed}, {"run", cfg.run.seed}};
  j["a"] = detail::mat_to_json(inst.scenario.system.a());
  j["w"] = detail::mat_to_json(inst.scenario.w);
  j["rho_a"] = spectral_radius(inst.scenario.system.a());
  j["gain"] = {{"achieved_rho", inst.gain.achieved_rho},
               {"margins", inst.gain.achieved_margins},
               {"c_floor", inst.gain.c_floor},
               {"evaluations", inst.synthesis.evaluations},
               {"source", cfg.gain.file ? *cfg.gain.file : std::string("synthesized")}};
  j["variance"] = variance_to_json(inst.variance.chosen);
  j["variance_paper_bound"] = inst.variance.paper ? variance_to_json(*inst.variance.paper) : json(nullptr);
  j["variance_lyapunov"] = inst.variance.lyapunov ? variance_to_json(*inst.variance.lyapunov) : json(nullptr);
  j["thresholds"] = thresholds_to_json(inst.thresholds, cfg.detector.window);
  j["window_note"] =
      "windows slide by one step, so consecutive v values are dependent; each FAR applies to a single window "
      "marginally. Verdicts start once T residuals have accumulated.";
  j["checks"] = check_to_json(inst.checks);
  return j;
}

struct ReplicationPaths {
  fs::path truth, estimates, mse, residuals, verdicts;
};

struct RunArtifacts {
  fs::path out_dir;
  fs::path metadata;
  fs::path thresholds;
  fs::path gain;
  std::vector<ReplicationPaths> replications;
  std::size_t h1_verdicts = 0;
  bool any_h1 = false;
};

inline std::string replication_dir_name(std::size_t rep) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rep_%04zu", rep);
  return buf;
}

inline RunArtifacts write_replication_set(const Instance& inst, const fs::path& out_dir,
                                          std::vector<ReplicationTrace>* keep = nullptr) {
  const auto& cfg = inst.scenario.cfg;
  fs::create_directories(out_dir);
  RunArtifacts art;
  art.out_dir = out_dir;
  art.thresholds = out_dir / "thresholds.json";
  art.metadata = out_dir / "metadata.json";
  art.gain = out_dir / "gain.json";
  write_text(art.thresholds, thresholds_to_json(inst.thresholds, cfg.detector.window).dump(2) + "\n");
  write_text(art.gain, gain_to_json(inst.gain).dump(2) + "\n");

  const AttackSchedule attacks(cfg.attacks);
  json h1_counts = json::array();
  for (std::size_t rep = 0; rep < cfg.run.replications; ++rep) {
    ReplicationTrace tr = simulate_replication(inst, attacks, rep, cfg.run.steps, cfg.run.seed);
    const fs::path dir = out_dir / replication_dir_name(rep);
    fs::create_directories(dir);
    ReplicationPaths p{dir / "truth.csv", dir / "estimates.csv", dir / "mse.csv", dir / "residuals.csv",
                       dir / "verdicts.csv"};
    write_text(p.truth, truth_csv(tr.truth));
    write_text(p.estimates, estimates_csv(tr.estimates));
    write_text(p.mse, mse_csv(tr.mse));
    write_text(p.residuals, residuals_csv(tr.residuals));
    write_text(p.verdicts, verdicts_csv(tr.verdicts, inst.thresholds));
    std::size_t h1 = 0;
    for (const auto& v : tr.verdicts) h1 += v.any_h1();
    h1_counts.push_back(h1);
    art.h1_verdicts += h1;
    art.any_h1 = art.any_h1 || tr.any_h1;
    art.replications.push_back(std::move(p));
    if (keep) keep->push_back(std::move(tr));
  }
  json meta = instance_metadata(inst);
  meta["h1_verdicts_per_replication"] = h1_counts;
  write_text(art.metadata, meta.dump(2) + "\n");
  return art;
}

/// The full pipeline: checks, gain, Λ_i, thresholds, estimation, detection,
/// and artifact files under `out_dir`.
inline RunArtifacts run_algorithm1(const ScenarioConfig& cfg, const fs::path& out_dir,
                                   std::vector<ReplicationTrace>* keep = nullptr) {
  const Instance inst = prepare_instance(cfg);
  return write_replication_set(inst, out_dir, keep);
}

struct CalibrationRow {
  double far;
  double theta;
  std::size_t windows;
  std::size_t h1;
  double rate;
  Interval ci;
  double expected_rate;  ///< chi-square tail at theta * lambda_scale
};

struct CalibrationOptions {
  double lambda = 1.0;
  std::size_t window = 12;
  std::vector<double> fars{0.05, 0.35};
  std::size_t windows = 10000;
  std::uint64_t seed = 0;
  double lambda_scale = 1.0;  ///< detector assumes lambda * scale while residuals have variance lambda
};

/// Empirical H1 rates on non-overlapping windows of synthetic N(0, lambda) residuals.
inline std::vector<CalibrationRow> far_calibrate(const CalibrationOptions& o) {
  if (o.windows < 100) throw std::invalid_argument("far_calibrate: at least 100 windows are required");
  if (!(o.lambda > 0.0) || !(o.lambda_scale > 0.0)) throw std::invalid_argument("far_calibrate: lambda must be positive");
  const auto ths = make_thresholds(o.fars, o.window);
  ChiSquareDetector det({o.lambda * o.lambda_scale}, o.window, ths);
  GaussianSampler s(o.seed, 0);
  const double sd = std::sqrt(o.lambda);
  std::vector<std::size_t> h1(ths.size(), 0);
  for (std::size_t w = 0; w < o.windows; ++w) {
    for (std::size_t t = 1; t <= o.window; ++t) {
      const std::size_t step = w * o.window + t;
      auto v = det.update({0, step, sd * s.standard_normal()});
      if (t == o.window)
        for (std::size_t i = 0; i < ths.size(); ++i) h1[i] += v->outcome[i] == Hypothesis::H1;
    }
  }
  std::vector<CalibrationRow> out;
  for (std::size_t i = 0; i < ths.size(); ++i) {
    const double rate = static_cast<double>(h1[i]) / static_cast<double>(o.windows);
    out.push_back({ths[i].far, ths[i].theta, o.windows, h1[i], rate, wilson_interval(h1[i], o.windows),
                   chi2_sf(ths[i].theta * o.lambda_scale, static_cast<double>(o.window))});
  }
  return out;
}

inline json calibration_to_json(const std::vector<CalibrationRow>& rows, const CalibrationOptions& o) {
  json table = json::array();
  for (const auto& r : rows)
    table.push_back({{"p", r.far},
                     {"theta", r.theta},
                     {"windows", r.windows},
                     {"h1", r.h1},
                     {"rate", r.rate},
                     {"ci95", {r.ci.lo, r.ci.hi}},
                     {"expected_rate", r.expected_rate}});
  return {{"lambda", o.lambda}, {"lambda_scale", o.lambda_scale}, {"T", o.window}, {"seed", o.seed},
          {"rows", table}};
}

/// Applies the online detector to recorded residuals, in file order.
inline std::vector<Verdict> detect_offline(const std::vector<ResidualRecord>& records, const Vec& lambda,
                                           std::size_t window, const std::vector<double>& fars) {
  ChiSquareDetector det(lambda, window, make_thresholds(fars, window));
  std::vector<Verdict> out;
  for (const auto& r : records) {
    if (r.sensor >= lambda.size())
      throw SchemaError("residual record names sensor " + std::to_string(r.sensor) + " but only " +
                        std::to_string(lambda.size()) + " variance levels are known");
    if (auto v = det.update(r)) out.push_back(std::move(*v));
  }
  return out;
}

/// Λ_i recorded by a previous run.
inline Vec lambda_from_metadata(const fs::path& path) {
  try {
    return json::parse(read_text(path)).at("variance").at("lambda").get<Vec>();
  } catch (const json::exception& e) {
    throw SchemaError("metadata " + path.string() + ": " + e.what());
  }
}

/// Runs the preset and summarizes window H1 rates before and after the attack onsets.
inline json reproduce_summary(const Instance& inst, const std::vector<ReplicationTrace>& traces) {
  const auto& cfg = inst.scenario.cfg;
  const std::size_t N = inst.scenario.sensors.sensor_count();
  const AttackSchedule atk(cfg.attacks);
  const auto change = change_points(atk, N, cfg.detector.window);
  WindowCounts wc(N, inst.thresholds.size());
  for (const auto& tr : traces) accumulate_windows(wc, tr.verdicts, cfg.detector.window, change);
  json sensors = json::array();
  for (std::size_t s = 0; s < N; ++s) {
    json rates = json::array();
    for (std::size_t th = 0; th < inst.thresholds.size(); ++th)
      rates.push_back({{"p", inst.thresholds[th].far},
                       {"theta", inst.thresholds[th].theta},
                       {"before", wc.before_rate(th, s)},
                       {"after", wc.after_rate(th, s)}});
    bool attacked = false;
    for (const auto& e : atk.episodes()) attacked = attacked || e.sensor == s;
    sensors.push_back({{"sensor", s},
                       {"attacked", attacked},
                       {"change_step", change[s]},
                       {"windows_before", wc.before_windows[s]},
                       {"windows_after", wc.after_windows[s]},
                       {"rates", rates}});
  }
  return {{"replications", traces.size()}, {"sensors", sensors}};
}

}  // namespace dchi::harness
