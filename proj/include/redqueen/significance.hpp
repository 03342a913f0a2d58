#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "redqueen/common.hpp"
#include "redqueen/point_process.hpp"

namespace redqueen {

enum class Granularity { weekday, weekday_hour };

inline std::size_t bucket_count(Granularity g) { return g == Granularity::weekday ? 7 : 7 * 24; }

inline double bucket_width(Granularity g) { return g == Granularity::weekday ? 86400.0 : 3600.0; }

inline std::string_view to_string(Granularity g) { return g == Granularity::weekday ? "weekday" : "weekday-hour"; }

inline Granularity parse_granularity(std::string_view text) {
  if (text == "weekday") return Granularity::weekday;
  if (text == "weekday-hour") return Granularity::weekday_hour;
  throw ConfigError("unknown granularity '" + std::string(text) + "' (expected weekday or weekday-hour)");
}

/// Maps relative event times (seconds since `epoch`) onto the civil calendar.
/// Timestamps carry no zone; `utc_offset` shifts to the follower's local time.
struct CalendarMapping {
  std::int64_t epoch = 0;  // unix seconds of relative time 0
  std::int64_t utc_offset = 0;

  double local_seconds(Time t) const {
    return static_cast<double>(epoch) + static_cast<double>(utc_offset) + t;
  }
};

/// Bucket index: Monday = 0 ... Sunday = 6, times 24 plus the hour for weekday-hour.
inline std::size_t bucket_of(Time t, Granularity g, const CalendarMapping& calendar) {
  using namespace std::chrono;
  const double local = calendar.local_seconds(t);
  const auto day = static_cast<std::int64_t>(std::floor(local / 86400.0));
  const weekday wd{sys_days{days{day}}};
  const std::size_t dow = wd.iso_encoding() - 1;
  if (g == Granularity::weekday) return dow;
  const double within = local - static_cast<double>(day) * 86400.0;
  const auto hour = std::min<std::size_t>(23, static_cast<std::size_t>(within / 3600.0));
  return dow * 24 + hour;
}

/// Per-follower time significance: bucket -> value in [0, 1], peak bucket 1.
struct SignificanceProfile {
  Granularity granularity = Granularity::weekday;
  double laplace = 1.0;
  std::vector<double> values;

  friend bool operator==(const SignificanceProfile&, const SignificanceProfile&) = default;
};

/// Empirical online probability per bucket:
///   (count_b + laplace) / (total + laplace * buckets),
/// then divided by the largest bucket so the peak has significance 1.
/// An empty log (or all-zero smoothing) yields a uniform profile.
inline SignificanceProfile estimate_significance(const EventStream& follower_events, Granularity granularity,
                                                 double laplace = 1.0, const CalendarMapping& calendar = {},
                                                 Diagnostics* diagnostics = nullptr) {
  if (!(laplace >= 0.0) || !std::isfinite(laplace)) throw ConfigError("laplace smoothing must be >= 0");
  const std::size_t buckets = bucket_count(granularity);
  std::vector<double> counts(buckets, 0.0);
  for (const auto& e : follower_events) counts[bucket_of(e.time, granularity, calendar)] += 1.0;

  SignificanceProfile profile{granularity, laplace, std::vector<double>(buckets, 1.0)};
  const double total = static_cast<double>(follower_events.size());
  const double denominator = total + laplace * static_cast<double>(buckets);
  if (follower_events.empty() || denominator == 0.0) {
    warn(diagnostics, "empty follower event log: using a uniform significance profile");
    return profile;
  }
  double peak = 0.0;
  for (std::size_t b = 0; b < buckets; ++b) {
    profile.values[b] = (counts[b] + laplace) / denominator;
    peak = std::max(peak, profile.values[b]);
  }
  for (auto& v : profile.values) v /= peak;
  return profile;
}

/// Piecewise-constant s(t) over the horizon with knots at bucket boundaries.
inline PiecewiseRate significance_schedule(const SignificanceProfile& profile, Horizon horizon,
                                           const CalendarMapping& calendar = {}) {
  if (profile.values.size() != bucket_count(profile.granularity)) {
    throw ConfigError("significance profile has the wrong number of buckets");
  }
  const double width = bucket_width(profile.granularity);
  const double offset = static_cast<double>(calendar.epoch) + static_cast<double>(calendar.utc_offset);
  std::vector<Time> knots{horizon.start};
  std::vector<double> values;
  // First boundary strictly after the start, in relative time.
  double boundary = (std::floor((horizon.start + offset) / width) + 1.0) * width - offset;
  Time left = horizon.start;
  while (left < horizon.end) {
    const Time right = std::min(boundary, horizon.end);
    values.push_back(profile.values[bucket_of(left, profile.granularity, calendar)]);
    knots.push_back(right);
    left = right;
    boundary += width;
  }
  return PiecewiseRate(std::move(knots), std::move(values));
}

/// CSV rows `follower_id,bucket_index,value`, preceded by a metadata comment.
inline void write_significance_csv(std::ostream& out,
                                   const std::vector<std::pair<std::string, SignificanceProfile>>& profiles) {
  const SignificanceProfile* first = profiles.empty() ? nullptr : &profiles.front().second;
  out << "# normalization=max-bucket-equals-1";
  if (first != nullptr) out << " granularity=" << to_string(first->granularity) << " laplace=" << format_double(first->laplace);
  out << '\n' << "follower_id,bucket_index,value\n";
  for (const auto& [id, profile] : profiles) {
    for (std::size_t b = 0; b < profile.values.size(); ++b) out << id << ',' << b << ',' << format_double(profile.values[b]) << '\n';
  }
}

/// Reads profiles written by write_significance_csv. Bucket indices must be
/// contiguous per follower.
inline std::vector<std::pair<std::string, SignificanceProfile>> read_significance_csv(std::istream& in,
                                                                                      Granularity granularity) {
  std::vector<std::pair<std::string, SignificanceProfile>> profiles;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != "follower_id,bucket_index,value") throw ParseError("unexpected significance CSV header", line_no);
      header_seen = true;
      continue;
    }
    std::stringstream row(line);
    std::string id, bucket, value;
    if (!std::getline(row, id, ',') || !std::getline(row, bucket, ',') || !std::getline(row, value)) {
      throw ParseError("expected follower_id,bucket_index,value", line_no);
    }
    if (profiles.empty() || profiles.back().first != id) {
      profiles.emplace_back(id, SignificanceProfile{granularity, 0.0, {}});
    }
    auto& values = profiles.back().second.values;
    try {
      if (static_cast<std::size_t>(std::stoul(bucket)) != values.size()) {
        throw ParseError("bucket indices must be contiguous", line_no);
      }
      values.push_back(parse_double(value));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("bad bucket index or value", line_no);
    }
  }
  for (const auto& [id, profile] : profiles) {
    if (profile.values.size() != bucket_count(granularity)) {
      throw ParseError("follower " + id + " has " + std::to_string(profile.values.size()) + " buckets", 0);
    }
  }
  return profiles;
}

}  // namespace redqueen
