#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dchi/harness.hpp"

namespace fs = std::filesystem;
using namespace dchi;
using namespace dchi::harness;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitError = 1;
constexpr int kExitAlarm = 2;

struct ScenarioArgs {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::size_t> replications;
};

void add_scenario_flags(CLI::App* cmd, ScenarioArgs& a, bool with_preset = true) {
  cmd->add_option("--config", a.config, "scenario JSON file");
  if (with_preset) cmd->add_option("--preset", a.preset, "built-in scenario (paper-fig2)");
  cmd->add_option("--seed", a.seed, "override run.seed");
  cmd->add_option("--out-dir", a.out_dir, "output directory (default: $DCHI_OUT_DIR, then run.output_dir)");
  cmd->add_option("--replications", a.replications, "override run.replications");
}

ScenarioConfig resolve(const ScenarioArgs& a) {
  if (!a.config.empty() && !a.preset.empty()) throw ConfigError("give either --config or --preset, not both");
  ScenarioConfig cfg;
  if (!a.config.empty())
    cfg = load_config(a.config);
  else if (!a.preset.empty())
    cfg = preset(a.preset);
  else
    throw ConfigError("a scenario is required: --config <path> or --preset <name>");
  if (a.seed) cfg.run.seed = *a.seed;
  if (a.replications) cfg.run.replications = *a.replications;
  validate(cfg);
  return cfg;
}

fs::path out_dir_for(const ScenarioArgs& a, const ScenarioConfig& cfg) {
  if (!a.out_dir.empty()) return a.out_dir;
  if (const char* env = std::getenv("DCHI_OUT_DIR"); env && *env) return fs::path(env) / cfg.name;
  return cfg.run.output_dir;
}

int exit_for(bool any_h1) { return any_h1 ? kExitAlarm : kExitClean; }

int cmd_check(const ScenarioArgs& a) {
  const ScenarioConfig cfg = resolve(a);
  const Scenario sc = build_scenario(cfg);
  const CheckReport rep = check_scenario(sc);
  std::cout << describe(rep);
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    write_text(fs::path(a.out_dir) / "check.json", check_to_json(rep).dump(2) + "\n");
  }
  return rep.passed() ? kExitClean : kExitError;
}

int cmd_synth(const ScenarioArgs& a) {
  ScenarioConfig cfg = resolve(a);
  cfg.gain.file.reset();
  const Instance inst = prepare_instance(cfg);
  const fs::path dir = out_dir_for(a, cfg);
  fs::create_directories(dir);
  save_gain(inst.gain, (dir / "gain.json").string());
  std::cout << "rho(Abar) = " << fmt(inst.gain.achieved_rho) << "\nmargins:";
  for (double m : inst.gain.achieved_margins) std::cout << ' ' << fmt(m);
  std::cout << "\nevaluations: " << inst.synthesis.evaluations << "\nwrote " << (dir / "gain.json").string() << "\n";
  return kExitClean;
}

int cmd_simulate(const ScenarioArgs& a) {
  const ScenarioConfig cfg = resolve(a);
  const fs::path dir = out_dir_for(a, cfg);
  const RunArtifacts art = run_algorithm1(cfg, dir);
  std::cout << "wrote " << art.replications.size() << " replication(s) to " << dir.string() << "\n"
            << "H1 verdicts: " << art.h1_verdicts << "\n";
  return exit_for(art.any_h1);
}

int cmd_reproduce(const std::string& which, ScenarioArgs a) {
  a.preset = which;
  a.config.clear();
  const ScenarioConfig cfg = resolve(a);
  const fs::path dir = out_dir_for(a, cfg);
  const Instance inst = prepare_instance(cfg);
  std::vector<ReplicationTrace> traces;
  const RunArtifacts art = write_replication_set(inst, dir, &traces);
  const json summary = reproduce_summary(inst, traces);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "rho(Abar) = " << fmt(inst.gain.achieved_rho) << ", variance method "
            << to_string(inst.variance.chosen.method) << ", b = " << fmt(inst.variance.b) << "\n";
  for (const auto& th : inst.thresholds) std::cout << "theta(p=" << fmt(th.far) << ") = " << fmt(th.theta) << "\n";
  for (const auto& s : summary["sensors"]) {
    std::cout << "sensor " << s["sensor"].get<std::size_t>() << (s["attacked"].get<bool>() ? " (attacked)" : "")
              << ":";
    for (const auto& r : s["rates"])
      std::cout << "  p=" << r["p"].get<double>() << " before " << r["before"].get<double>() << " after "
                << r["after"].get<double>();
    std::cout << "\n";
  }
  std::cout << "wrote " << dir.string() << "\n";
  return exit_for(art.any_h1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed estimation with windowed chi-square attack detection"};
  app.require_subcommand(1);

  ScenarioArgs check_args, synth_args, sim_args, repro_args;
  auto* check = app.add_subcommand("check", "structural and observability checks");
  add_scenario_flags(check, check_args);
  auto* synth = app.add_subcommand("synth-gain", "synthesize the block-diagonal gain");
  add_scenario_flags(synth, synth_args);
  auto* sim = app.add_subcommand("simulate", "run estimation and detection, write traces");
  add_scenario_flags(sim, sim_args);

  auto* repro = app.add_subcommand("reproduce", "run a built-in scenario and summarize detection");
  std::string repro_which;
  repro->add_option("scenario", repro_which, "scenario name")->required()->check(CLI::IsMember({"paper-fig2"}));
  add_scenario_flags(repro, repro_args, false);

  CalibrationOptions cal;
  std::string cal_out;
  auto* far = app.add_subcommand("far-calibrate", "empirical false-alarm rates on synthetic residuals");
  far->add_option("--lambda", cal.lambda, "residual variance")->capture_default_str();
  far->add_option("--window", cal.window, "window length T")->capture_default_str();
  far->add_option("--far", cal.fars, "false-alarm probabilities")->capture_default_str();
  far->add_option("--windows", cal.windows, "non-overlapping windows")->capture_default_str();
  far->add_option("--seed", cal.seed, "sampler seed")->capture_default_str();
  far->add_option("--lambda-scale", cal.lambda_scale, "detector variance / true variance")->capture_default_str();
  far->add_option("--out-dir", cal_out, "write calibration.json here");

  std::string det_residuals, det_metadata, det_out;
  std::vector<double> det_lambda;
  std::size_t det_window = 12;
  std::vector<double> det_fars{0.05, 0.35};
  auto* det = app.add_subcommand("detect", "apply the detector to a residual trace");
  det->add_option("--residuals", det_residuals, "CSV with step,sensor,value")->required();
  auto* lam_opt = det->add_option("--lambda", det_lambda, "variance level per sensor");
  auto* meta_opt = det->add_option("--metadata", det_metadata, "metadata.json of a previous run");
  lam_opt->excludes(meta_opt);
  det->add_option("--window", det_window, "window length T")->capture_default_str();
  det->add_option("--far", det_fars, "false-alarm probabilities")->capture_default_str();
  det->add_option("--out", det_out, "verdict CSV (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*check) return cmd_check(check_args);
    if (*synth) return cmd_synth(synth_args);
    if (*sim) return cmd_simulate(sim_args);
    if (*repro) return cmd_reproduce(repro_which, repro_args);
    if (*far) {
      const auto rows = far_calibrate(cal);
      const json j = calibration_to_json(rows, cal);
      std::cout << j.dump(2) << "\n";
      if (!cal_out.empty()) {
        fs::create_directories(cal_out);
        write_text(fs::path(cal_out) / "calibration.json", j.dump(2) + "\n");
      }
      return kExitClean;
    }
    if (*det) {
      if (det_lambda.empty() && det_metadata.empty()) throw ConfigError("detect needs --lambda or --metadata");
      const Vec lambda = det_metadata.empty() ? det_lambda : lambda_from_metadata(det_metadata);
      const auto verdicts = detect_offline(read_residuals(fs::path(det_residuals)), lambda, det_window, det_fars);
      const std::string csv = verdicts_csv(verdicts, make_thresholds(det_fars, det_window));
      if (det_out.empty())
        std::cout << csv;
      else
        write_text(det_out, csv);
      bool any = false;
      for (const auto& v : verdicts) any = any || v.any_h1();
      return exit_for(any);
    }
  } catch (const SynthesisInfeasible& e) {
    std::cerr << "gain synthesis infeasible: " << e.what() << "\n";
    return kExitError;
  } catch (const CheckFailed& e) {
    std::cerr << e.what();
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
