#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "dchi/chidetect.hpp"
#include "dchi/errors.hpp"
#include "dchi/estimator.hpp"
#include "dchi/harness/pipeline.hpp"

namespace dchi::harness {

/// Shortest decimal form that parses back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string far_label(double p) { return "h1_p" + fmt(p); }

inline std::string verdict_header(const std::vector<Threshold>& thresholds) {
  std::string h = "step,sensor,z,v";
  for (const auto& t : thresholds) h += "," + far_label(t.far);
  return h + "\n";
}

inline void append_verdict(std::string& out, const Verdict& v) {
  out += std::to_string(v.step) + "," + std::to_string(v.sensor) + "," + fmt(v.z) + "," + fmt(v.v);
  for (auto h : v.outcome) out += h == Hypothesis::H1 ? ",1" : ",0";
  out += "\n";
}

inline std::string verdicts_csv(const std::vector<Verdict>& verdicts, const std::vector<Threshold>& thresholds) {
  std::string out = verdict_header(thresholds);
  for (const auto& v : verdicts) append_verdict(out, v);
  return out;
}

inline std::string residuals_csv(const std::vector<Vec>& residuals) {
  std::string out = "step,sensor,value\n";
  for (std::size_t k = 0; k < residuals.size(); ++k)
    for (std::size_t i = 0; i < residuals[k].size(); ++i)
      out += std::to_string(k + 1) + "," + std::to_string(i) + "," + fmt(residuals[k][i]) + "\n";
  return out;
}

inline std::string mse_csv(const std::vector<Vec>& mse) {
  std::string out = "step,sensor,value\n";
  for (std::size_t k = 0; k < mse.size(); ++k)
    for (std::size_t i = 0; i < mse[k].size(); ++i)
      out += std::to_string(k) + "," + std::to_string(i) + "," + fmt(mse[k][i]) + "\n";
  return out;
}

inline std::string truth_csv(const std::vector<Vec>& truth) {
  std::string out = "step,state,value\n";
  for (std::size_t k = 0; k < truth.size(); ++k)
    for (std::size_t p = 0; p < truth[k].size(); ++p)
      out += std::to_string(k) + "," + std::to_string(p) + "," + fmt(truth[k][p]) + "\n";
  return out;
}

inline std::string estimates_csv(const std::vector<std::vector<Vec>>& est) {
  std::string out = "step,sensor,state,value\n";
  for (std::size_t k = 0; k < est.size(); ++k)
    for (std::size_t i = 0; i < est[k].size(); ++i)
      for (std::size_t p = 0; p < est[k][i].size(); ++p)
        out += std::to_string(k) + "," + std::to_string(i) + "," + std::to_string(p) + "," + fmt(est[k][i][p]) + "\n";
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <class T>
T parse_field(const std::string& s, std::size_t lineno) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw SchemaError("residual file line " + std::to_string(lineno) + ": bad field '" + s + "'");
  return v;
}

}  // namespace detail

/// Reads `step,sensor,value` records in file order.
inline std::vector<ResidualRecord> read_residuals(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("residual file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "step,sensor,value") throw SchemaError("residual file: expected header 'step,sensor,value'");
  std::vector<ResidualRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) throw SchemaError("residual file line " + std::to_string(lineno) + ": expected 3 fields");
    out.push_back({detail::parse_field<std::size_t>(f[1], lineno), detail::parse_field<std::size_t>(f[0], lineno),
                   detail::parse_field<double>(f[2], lineno)});
  }
  return out;
}

inline std::vector<ResidualRecord> read_residuals(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_residuals(in);
}

}  // namespace dchi::harness
