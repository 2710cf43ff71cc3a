#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dchi/chidetect.hpp"
#include "dchi/errors.hpp"
#include "dchi/gainsynth.hpp"
#include "dchi/mat.hpp"
#include "dchi/netgraph.hpp"
#include "dchi/sysmodel.hpp"

namespace dchi::harness {

using nlohmann::json;

struct SystemBlock {
  std::size_t n = 0;
  std::vector<Edge> edges;  ///< state graph; self-loops are implied
  std::optional<Mat> a;     ///< explicit A; otherwise drawn from `seed`
  double target_rho = 1.1;
  std::optional<double> q_scale = 0.06;  ///< Q = q_scale * I
  std::optional<Mat> q;                  ///< full Q, exclusive with q_scale
  std::uint64_t seed = 0;                ///< draws A and random fusion weights
  friend bool operator==(const SystemBlock&, const SystemBlock&) = default;
};

struct SensorsBlock {
  std::vector<std::pair<std::size_t, std::size_t>> assignments;  ///< (sensor, state)
  Vec r;
  std::optional<std::vector<Edge>> network;  ///< empty means the directed cycle 0 -> 1 -> ... -> 0
  bool random_weights = false;
  std::optional<Mat> w;  ///< explicit fusion matrix
  friend bool operator==(const SensorsBlock&, const SensorsBlock&) = default;
};

struct GainBlock {
  double c_floor = 0.2;
  int budget = 20000;
  std::uint64_t seed = 0;
  GainSupport support = GainSupport::column;
  double target_rho = 0.99;
  std::optional<double> own_gain;
  std::optional<std::string> file;
  friend bool operator==(const GainBlock&, const GainBlock&) = default;
};

struct DetectorBlock {
  std::size_t window = 12;
  Vec fars{0.05, 0.35};
  VarianceSource variance = VarianceSource::automatic;
  friend bool operator==(const DetectorBlock&, const DetectorBlock&) = default;
};

struct RunBlock {
  std::size_t steps = 300;
  std::uint64_t seed = 0;
  std::size_t replications = 1;
  std::string output_dir = "out";
  friend bool operator==(const RunBlock&, const RunBlock&) = default;
};

struct ScenarioConfig {
  std::string name = "custom";
  SystemBlock system;
  SensorsBlock sensors;
  GainBlock gain;
  DetectorBlock detector;
  std::vector<AttackEpisode> attacks;
  RunBlock run;
};

inline bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
  return a.name == b.name && a.system == b.system && a.sensors == b.sensors && a.gain == b.gain &&
         a.detector == b.detector && a.attacks == b.attacks && a.run == b.run;
}

inline SensingPattern sensing_pattern(const ScenarioConfig& cfg) {
  SensingPattern sp;
  sp.state_of_sensor.resize(cfg.sensors.assignments.size());
  for (const auto& [sensor, state] : cfg.sensors.assignments) sp.state_of_sensor.at(sensor) = state;
  return sp;
}

/// Throws ConfigError naming the first problem found.
inline void validate(const ScenarioConfig& cfg) {
  const auto& s = cfg.system;
  if (s.n == 0) throw ConfigError("system.n must be positive");
  for (const auto& e : s.edges)
    if (e.from >= s.n || e.to >= s.n) throw ConfigError("system.edges: index out of range");
  if (s.a && (s.a->rows() != s.n || s.a->cols() != s.n)) throw ConfigError("system.a must be n x n");
  if (!s.a && !(s.target_rho > 0.0)) throw ConfigError("system.target_rho must be positive");
  if (s.q_scale.has_value() == s.q.has_value()) throw ConfigError("system: give exactly one of q_scale and q");
  if (s.q_scale && !(*s.q_scale >= 0.0)) throw ConfigError("system.q_scale must be nonnegative");
  if (s.q && (s.q->rows() != s.n || s.q->cols() != s.n)) throw ConfigError("system.q must be n x n");

  const auto& se = cfg.sensors;
  const std::size_t N = se.assignments.size();
  if (N == 0) throw ConfigError("sensors.assignments is empty");
  std::set<std::size_t> ids;
  for (const auto& [sensor, state] : se.assignments) {
    if (sensor >= N) throw ConfigError("sensors.assignments: sensor id out of range");
    if (state >= s.n) throw ConfigError("sensors.assignments: state index out of range");
    if (!ids.insert(sensor).second) throw ConfigError("sensors.assignments: sensor listed twice");
  }
  if (se.r.size() != N) throw ConfigError("sensors.r needs one variance per sensor");
  for (double r : se.r)
    if (!(r > 0.0)) throw ConfigError("sensors.r entries must be positive");
  if (se.network)
    for (const auto& e : *se.network)
      if (e.from >= N || e.to >= N) throw ConfigError("sensors.network: index out of range");
  if (se.w && (se.w->rows() != N || se.w->cols() != N)) throw ConfigError("sensors.w must be N x N");

  const auto& g = cfg.gain;
  if (!(g.c_floor >= 0.0)) throw ConfigError("gain.c_floor must be nonnegative");
  if (g.budget <= 0) throw ConfigError("gain.budget must be positive");
  if (g.own_gain && !(*g.own_gain >= 0.0)) throw ConfigError("gain.own_gain must be nonnegative");

  const auto& d = cfg.detector;
  if (d.window < 1) throw ConfigError("detector.window must be at least 1");
  if (d.fars.empty()) throw ConfigError("detector.fars is empty");
  for (double p : d.fars)
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("detector.fars entries must lie in (0, 1)");

  for (const auto& e : cfg.attacks) {
    if (e.sensor >= N) throw ConfigError("attacks: sensor out of range");
    if (e.end && *e.end < e.start) throw ConfigError("attacks: episode ends before it starts");
    if (!(e.stddev >= 0.0)) throw ConfigError("attacks: std must be nonnegative");
  }
  try {
    AttackSchedule{cfg.attacks};
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(std::string("attacks: ") + ex.what());
  }

  if (cfg.run.steps < d.window) throw ConfigError("run.steps must be at least detector.window");
  if (cfg.run.replications < 1) throw ConfigError("run.replications must be at least 1");
}

namespace detail {

inline json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

inline Mat mat_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw SchemaError(std::string(what) + ": expected a nonempty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().size();
  std::vector<double> entries;
  for (const auto& r : j) {
    if (!r.is_array() || r.size() != cols) throw SchemaError(std::string(what) + ": ragged rows");
    for (const auto& v : r) entries.push_back(v.get<double>());
  }
  try {
    return Mat(rows, cols, std::move(entries));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
}

inline json edges_to_json(const std::vector<Edge>& edges) {
  json out = json::array();
  for (const auto& e : edges) out.push_back({e.from, e.to});
  return out;
}

inline std::vector<Edge> edges_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw SchemaError(std::string(what) + ": expected an array of [from, to] pairs");
  std::vector<Edge> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw SchemaError(std::string(what) + ": expected [from, to]");
    out.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
  }
  return out;
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* block) {
  if (!j.is_object()) throw SchemaError(std::string(block) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw SchemaError(std::string(block) + ": unknown key '" + k + "'");
  }
}

inline std::string support_name(GainSupport s) { return s == GainSupport::column ? "column" : "full_block"; }

inline std::string variance_name(VarianceSource v) {
  switch (v) {
    case VarianceSource::paper_bound:
      return "paper-bound";
    case VarianceSource::lyapunov_exact:
      return "lyapunov-exact";
    default:
      return "auto";
  }
}

}  // namespace detail

inline json to_json(const ScenarioConfig& cfg) {
  using detail::edges_to_json;
  using detail::mat_to_json;
  json sys = {{"n", cfg.system.n},
              {"edges", edges_to_json(cfg.system.edges)},
              {"target_rho", cfg.system.target_rho},
              {"seed", cfg.system.seed}};
  if (cfg.system.a) sys["a"] = mat_to_json(*cfg.system.a);
  if (cfg.system.q_scale) sys["q_scale"] = *cfg.system.q_scale;
  if (cfg.system.q) sys["q"] = mat_to_json(*cfg.system.q);

  json assignments = json::array();
  for (const auto& [s, x] : cfg.sensors.assignments) assignments.push_back({s, x});
  json sensors = {{"assignments", assignments},
                  {"r", cfg.sensors.r},
                  {"weights", cfg.sensors.random_weights ? "random" : "uniform"}};
  if (cfg.sensors.network)
    sensors["network"] = {{"edges", edges_to_json(*cfg.sensors.network)}};
  else
    sensors["network"] = "cycle";
  if (cfg.sensors.w) sensors["w"] = mat_to_json(*cfg.sensors.w);

  json gain = {{"c_floor", cfg.gain.c_floor},
               {"budget", cfg.gain.budget},
               {"seed", cfg.gain.seed},
               {"support", detail::support_name(cfg.gain.support)},
               {"target_rho", cfg.gain.target_rho}};
  if (cfg.gain.own_gain) gain["own_gain"] = *cfg.gain.own_gain;
  if (cfg.gain.file) gain["file"] = *cfg.gain.file;

  json det = {{"window", cfg.detector.window},
              {"fars", cfg.detector.fars},
              {"variance", detail::variance_name(cfg.detector.variance)}};

  json attacks = json::array();
  for (const auto& e : cfg.attacks) {
    json a = {{"sensor", e.sensor}, {"start", e.start}, {"mean", e.mean}, {"std", e.stddev}};
    if (e.end) a["end"] = *e.end;
    attacks.push_back(std::move(a));
  }

  json run = {{"steps", cfg.run.steps},
              {"seed", cfg.run.seed},
              {"replications", cfg.run.replications},
              {"output_dir", cfg.run.output_dir}};

  return {{"name", cfg.name}, {"system", sys},     {"sensors", sensors}, {"gain", gain},
          {"detector", det},  {"attacks", attacks}, {"run", run}};
}

/// Parses and validates. Missing optional keys take defaults; unknown keys are rejected.
inline ScenarioConfig config_from_json(const json& j) {
  ScenarioConfig cfg;
  try {
    detail::reject_unknown(j, {"name", "system", "sensors", "gain", "detector", "attacks", "run"}, "config");
    cfg.name = j.value("name", cfg.name);

    const json& s = j.at("system");
    detail::reject_unknown(s, {"n", "edges", "a", "target_rho", "q_scale", "q", "seed"}, "system");
    cfg.system.n = s.at("n").get<std::size_t>();
    cfg.system.edges = detail::edges_from_json(s.value("edges", json::array()), "system.edges");
    if (s.contains("a")) cfg.system.a = detail::mat_from_json(s["a"], "system.a");
    cfg.system.target_rho = s.value("target_rho", cfg.system.target_rho);
    cfg.system.seed = s.value("seed", cfg.system.seed);
    if (s.contains("q")) {
      cfg.system.q = detail::mat_from_json(s["q"], "system.q");
      cfg.system.q_scale.reset();
    }
    if (s.contains("q_scale")) cfg.system.q_scale = s["q_scale"].get<double>();

    const json& se = j.at("sensors");
    detail::reject_unknown(se, {"assignments", "r", "network", "weights", "w"}, "sensors");
    for (const auto& p : se.at("assignments")) {
      if (!p.is_array() || p.size() != 2) throw SchemaError("sensors.assignments: expected [sensor, state]");
      cfg.sensors.assignments.emplace_back(p[0].get<std::size_t>(), p[1].get<std::size_t>());
    }
    cfg.sensors.r = se.at("r").get<Vec>();
    if (se.contains("network")) {
      const json& net = se["network"];
      if (net.is_string()) {
        if (net.get<std::string>() != "cycle") throw SchemaError("sensors.network: only the preset 'cycle' is named");
      } else {
        detail::reject_unknown(net, {"edges"}, "sensors.network");
        cfg.sensors.network = detail::edges_from_json(net.at("edges"), "sensors.network.edges");
      }
    }
    const std::string weights = se.value("weights", std::string("uniform"));
    if (weights != "uniform" && weights != "random") throw SchemaError("sensors.weights: expected uniform or random");
    cfg.sensors.random_weights = weights == "random";
    if (se.contains("w")) cfg.sensors.w = detail::mat_from_json(se["w"], "sensors.w");

    if (j.contains("gain")) {
      const json& g = j["gain"];
      detail::reject_unknown(g, {"c_floor", "budget", "seed", "support", "target_rho", "own_gain", "file"}, "gain");
      cfg.gain.c_floor = g.value("c_floor", cfg.gain.c_floor);
      cfg.gain.budget = g.value("budget", cfg.gain.budget);
      cfg.gain.seed = g.value("seed", cfg.gain.seed);
      const std::string support = g.value("support", std::string("column"));
      if (support == "column")
        cfg.gain.support = GainSupport::column;
      else if (support == "full_block")
        cfg.gain.support = GainSupport::full_block;
      else
        throw SchemaError("gain.support: expected column or full_block");
      cfg.gain.target_rho = g.value("target_rho", cfg.gain.target_rho);
      if (g.contains("own_gain")) cfg.gain.own_gain = g["own_gain"].get<double>();
      if (g.contains("file")) cfg.gain.file = g["file"].get<std::string>();
    }

    if (j.contains("detector")) {
      const json& d = j["detector"];
      detail::reject_unknown(d, {"window", "fars", "variance"}, "detector");
      cfg.detector.window = d.value("window", cfg.detector.window);
      if (d.contains("fars")) cfg.detector.fars = d["fars"].get<Vec>();
      const std::string v = d.value("variance", std::string("auto"));
      if (v == "auto")
        cfg.detector.variance = VarianceSource::automatic;
      else if (v == "paper-bound")
        cfg.detector.variance = VarianceSource::paper_bound;
      else if (v == "lyapunov-exact")
        cfg.detector.variance = VarianceSource::lyapunov_exact;
      else
        throw SchemaError("detector.variance: expected auto, paper-bound or lyapunov-exact");
    }

    if (j.contains("attacks")) {
      for (const auto& a : j["attacks"]) {
        detail::reject_unknown(a, {"sensor", "start", "end", "mean", "std"}, "attacks[]");
        AttackEpisode e;
        e.sensor = a.at("sensor").get<std::size_t>();
        e.start = a.at("start").get<std::size_t>();
        if (a.contains("end") && !a["end"].is_null()) e.end = a["end"].get<std::size_t>();
        e.mean = a.value("mean", 0.0);
        e.stddev = a.value("std", 0.0);
        cfg.attacks.push_back(e);
      }
    }

    if (j.contains("run")) {
      const json& r = j["run"];
      detail::reject_unknown(r, {"steps", "seed", "replications", "output_dir"}, "run");
      cfg.run.steps = r.value("steps", cfg.run.steps);
      cfg.run.seed = r.value("seed", cfg.run.seed);
      cfg.run.replications = r.value("replications", cfg.run.replications);
      cfg.run.output_dir = r.value("output_dir", cfg.run.output_dir);
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw SchemaError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// Ten social states in four strongly connected groups, four sensors on a
/// directed cycle, attacks on sensors 0 and 2.
inline ScenarioConfig paper_fig2_preset() {
  ScenarioConfig cfg;
  cfg.name = "paper-fig2";
  cfg.system.n = 10;
  cfg.system.edges = {{1, 0}, {2, 0}, {0, 1}, {0, 2}, {1, 2}, {4, 3}, {5, 3}, {3, 4}, {3, 5},
                      {4, 5}, {7, 6}, {6, 7}, {9, 8}, {8, 9}, {2, 4}, {5, 7}, {7, 9}};
  cfg.system.target_rho = 1.1;
  cfg.system.q_scale = 0.06;
  cfg.system.seed = 1;
  cfg.sensors.assignments = {{0, 0}, {1, 3}, {2, 6}, {3, 8}};
  cfg.sensors.r = {0.06, 0.06, 0.06, 0.06};
  cfg.sensors.random_weights = true;
  cfg.gain.c_floor = 0.2;
  cfg.gain.budget = 20000;
  cfg.gain.seed = 1;
  cfg.gain.target_rho = 0.0;
  cfg.gain.own_gain = 0.65;
  cfg.detector.window = 12;
  cfg.detector.fars = {0.05, 0.35};
  cfg.attacks = {{2, 60, std::nullopt, 0.2, std::sqrt(0.3)}, {0, 40, std::nullopt, 0.0, std::sqrt(0.8)}};
  cfg.run.steps = 300;
  cfg.run.seed = 1;
  cfg.run.replications = 50;
  cfg.run.output_dir = "out/paper-fig2";
  return cfg;
}

inline ScenarioConfig preset(const std::string& name) {
  if (name == "paper-fig2") return paper_fig2_preset();
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace dchi::harness
