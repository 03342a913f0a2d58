#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "redqueen/common.hpp"
#include "redqueen/feed_sim.hpp"

namespace redqueen {

namespace detail {

inline void require_covers(const RankPath& path, Time a, Time b) {
  if (!(a >= path.start()) || !(b <= path.end()) || b < a) {
    throw ConfigError("rank path does not cover the requested interval");
  }
}

/// Integral of f(rank) over [a, b] for a step path.
template <class F>
double integrate_steps(const RankPath& path, Time a, Time b, F&& f) {
  require_covers(path, a, b);
  const auto changes = path.changes();
  double total = 0.0;
  for (std::size_t i = 0; i < changes.size(); ++i) {
    const Time lo = std::max(a, changes[i].time);
    const Time hi = std::min(b, i + 1 < changes.size() ? changes[i + 1].time : path.end());
    if (hi > lo) total += f(changes[i].rank) * (hi - lo);
  }
  return total;
}

}  // namespace detail

/// Integral of r(t) over [a, b].
inline double position_over_time(const RankPath& path, Time a, Time b) {
  return detail::integrate_steps(path, a, b, [](Rank r) { return static_cast<double>(r); });
}

inline double position_over_time(const RankPath& path) { return position_over_time(path, path.start(), path.end()); }

/// Measure of {t in [a, b] : r(t) < 1}.
inline double time_at_top(const RankPath& path, Time a, Time b) {
  return detail::integrate_steps(path, a, b, [](Rank r) { return r == 0 ? 1.0 : 0.0; });
}

inline double time_at_top(const RankPath& path) { return time_at_top(path, path.start(), path.end()); }

/// Time average of the cross-follower mean rank.
inline double average_position(std::span<const RankPath> paths) {
  if (paths.empty()) throw ConfigError("average_position: empty follower set");
  const Time a = paths.front().start();
  const Time b = paths.front().end();
  if (!(b > a)) throw ConfigError("average_position: empty horizon");
  double total = 0.0;
  for (const auto& p : paths) total += position_over_time(p, a, b);
  return total / static_cast<double>(paths.size()) / (b - a);
}

struct MetricsReport {
  std::string run;
  std::string policy;
  std::uint64_t seed = 0;
  std::size_t posts = 0;
  double position_over_time = 0.0;  // follower-averaged integral of r(t)
  double time_at_top = 0.0;         // follower-averaged measure of r(t) = 0
  Horizon horizon;
  /// Ratios against a reference policy. NaN marks a zero reference (undefined).
  std::optional<double> normalized_position;
  std::optional<double> normalized_time_at_top;
};

/// Follower-averaged metrics of a trajectory; with one follower these are the
/// plain integrals.
inline MetricsReport evaluate(const SimulationTrajectory& traj, std::string run, std::string policy,
                              std::uint64_t seed) {
  if (traj.rank_paths.empty()) throw ConfigError("evaluate: trajectory has no followers");
  MetricsReport report;
  report.run = std::move(run);
  report.policy = std::move(policy);
  report.seed = seed;
  report.posts = traj.post_count();
  report.horizon = traj.horizon;
  double position = 0.0;
  double top = 0.0;
  for (const auto& path : traj.rank_paths) {
    position += position_over_time(path, traj.horizon.start, traj.horizon.end);
    top += time_at_top(path, traj.horizon.start, traj.horizon.end);
  }
  const double n = static_cast<double>(traj.rank_paths.size());
  report.position_over_time = position / n;
  report.time_at_top = top / n;
  return report;
}

inline double ratio_or_undefined(double value, double reference) {
  return reference == 0.0 ? std::numeric_limits<double>::quiet_NaN() : value / reference;
}

inline bool is_undefined(const std::optional<double>& ratio) { return ratio && std::isnan(*ratio); }

/// Per-measure ratios report/reference; y = 1 means parity with the reference.
inline MetricsReport normalize(MetricsReport report, const MetricsReport& reference) {
  if (!(report.horizon == reference.horizon)) throw ConfigError("normalize: reports cover different horizons");
  report.normalized_position = ratio_or_undefined(report.position_over_time, reference.position_over_time);
  report.normalized_time_at_top = ratio_or_undefined(report.time_at_top, reference.time_at_top);
  return report;
}

/// Location and spread of a sample: mean with standard error, median with quartiles.
struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double standard_error = 0.0;
  double median = 0.0;
  double lower_quartile = 0.0;
  double upper_quartile = 0.0;
};

/// Linear-interpolation quantile of a sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// NaN entries are ignored.
inline Summary summarize(std::span<const double> values) {
  std::vector<double> v;
  v.reserve(values.size());
  for (double x : values) {
    if (!std::isnan(x)) v.push_back(x);
  }
  Summary s;
  s.count = v.size();
  if (v.empty()) {
    s.mean = s.standard_error = s.median = s.lower_quartile = s.upper_quartile =
        std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.standard_error = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  }
  std::sort(v.begin(), v.end());
  s.median = quantile_sorted(v, 0.5);
  s.lower_quartile = quantile_sorted(v, 0.25);
  s.upper_quartile = quantile_sorted(v, 0.75);
  return s;
}

/// Total quadratic cost s/2 * integral r^2 + q/2 * posts + r(tf)^2/2 of a
/// single-follower trajectory with constant significance.
inline double quadratic_cost(const RankPath& path, std::size_t posts, double q, double significance = 1.0) {
  const double squares = detail::integrate_steps(path, path.start(), path.end(), [](Rank r) {
    const double x = static_cast<double>(r);
    return x * x;
  });
  const double last = static_cast<double>(path.at(path.end()));
  return 0.5 * significance * squares + 0.5 * q * static_cast<double>(posts) + 0.5 * last * last;
}

}  // namespace redqueen
