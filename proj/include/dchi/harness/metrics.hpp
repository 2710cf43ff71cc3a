#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "dchi/chidetect.hpp"
#include "dchi/sysmodel.hpp"

namespace dchi::harness {

/// H1 counts on non-overlapping windows ending at steps T, 2T, ..., split at
/// a per-sensor change point. A window counts as "before" when it ends before
/// the change point and "after" when it starts at or after it; windows that
/// straddle it are dropped.
struct WindowCounts {
  std::vector<std::size_t> before_windows, after_windows;      ///< [sensor]
  std::vector<std::vector<std::size_t>> before_h1, after_h1;  ///< [threshold][sensor]

  WindowCounts(std::size_t sensors, std::size_t thresholds)
      : before_windows(sensors, 0),
        after_windows(sensors, 0),
        before_h1(thresholds, std::vector<std::size_t>(sensors, 0)),
        after_h1(thresholds, std::vector<std::size_t>(sensors, 0)) {}

  double before_rate(std::size_t th, std::size_t s) const {
    return before_windows[s] ? static_cast<double>(before_h1[th][s]) / static_cast<double>(before_windows[s]) : 0.0;
  }
  double after_rate(std::size_t th, std::size_t s) const {
    return after_windows[s] ? static_cast<double>(after_h1[th][s]) / static_cast<double>(after_windows[s]) : 0.0;
  }
};

/// Change point for each sensor: its own earliest attack onset, or the earliest
/// onset of the whole schedule for sensors that are never attacked. With no
/// attacks at all the fallback is used.
inline std::vector<std::size_t> change_points(const AttackSchedule& atk, std::size_t sensors, std::size_t fallback) {
  std::size_t earliest = std::numeric_limits<std::size_t>::max();
  for (const auto& e : atk.episodes()) earliest = std::min(earliest, e.start);
  if (atk.empty()) earliest = fallback;
  std::vector<std::size_t> out(sensors, earliest);
  std::vector<bool> own(sensors, false);
  for (const auto& e : atk.episodes()) {
    if (!own[e.sensor] || e.start < out[e.sensor]) out[e.sensor] = e.start;
    own[e.sensor] = true;
  }
  return out;
}

inline void accumulate_windows(WindowCounts& wc, const std::vector<Verdict>& verdicts, std::size_t t,
                               const std::vector<std::size_t>& change) {
  for (const auto& v : verdicts) {
    if (v.step % t != 0) continue;
    const std::size_t s = v.sensor;
    const std::size_t first = v.step - t + 1;
    if (v.step < change[s]) {
      ++wc.before_windows[s];
      for (std::size_t th = 0; th < v.outcome.size(); ++th) wc.before_h1[th][s] += v.outcome[th] == Hypothesis::H1;
    } else if (first >= change[s]) {
      ++wc.after_windows[s];
      for (std::size_t th = 0; th < v.outcome.size(); ++th) wc.after_h1[th][s] += v.outcome[th] == Hypothesis::H1;
    }
  }
}

/// p + 3 sqrt(p (1 - p) / windows).
inline double binomial_upper(double p, std::size_t windows) {
  return p + 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(std::max<std::size_t>(windows, 1)));
}

struct Interval {
  double lo;
  double hi;
};

/// Wilson score interval for k successes in n trials.
inline Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nd = static_cast<double>(n);
  const double ph = static_cast<double>(k) / nd;
  const double z2 = z * z;
  const double centre = (ph + z2 / (2.0 * nd)) / (1.0 + z2 / nd);
  const double half = z * std::sqrt(ph * (1.0 - ph) / nd + z2 / (4.0 * nd * nd)) / (1.0 + z2 / nd);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

}  // namespace dchi::harness
