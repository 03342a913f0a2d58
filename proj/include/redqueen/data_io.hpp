#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "redqueen/common.hpp"
#include "redqueen/feed_sim.hpp"
#include "redqueen/metrics.hpp"
#include "redqueen/point_process.hpp"
#include "redqueen/significance.hpp"

namespace redqueen {

/// Interns string user ids as dense SourceIds in first-seen order.
class IdRegistry {
 public:
  SourceId intern(std::string_view name) {
    const auto it = ids_.find(std::string(name));
    if (it != ids_.end()) return it->second;
    const SourceId id{static_cast<std::uint32_t>(names_.size())};
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
  }

  std::optional<SourceId> find(std::string_view name) const {
    const auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(SourceId id) const { return names_.at(to_underlying(id)); }
  std::size_t size() const noexcept { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, SourceId> ids_;
};

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

inline bool blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::string json_string(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

}  // namespace detail

/// Reads JSON-lines `{"t": <seconds>, "src": "<user-id>"}`. Blank lines are
/// skipped. Unsorted input is stable-sorted and equal times are separated by
/// one ulp; both are reported as warnings.
inline EventStream load_events(std::istream& in, IdRegistry& ids, Diagnostics* diagnostics = nullptr) {
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!record.is_object() || !record.contains("t") || !record.contains("src")) {
      throw ParseError("expected an object with fields t and src", line_no);
    }
    const auto& t = record["t"];
    const auto& src = record["src"];
    if (!t.is_number() || !src.is_string()) throw ParseError("t must be a number and src a string", line_no);
    const double time = t.get<double>();
    if (!std::isfinite(time)) throw ParseError("t must be finite", line_no);
    events.push_back(Event{time, ids.intern(src.get<std::string>())});
  }

  const auto by_time = [](const Event& a, const Event& b) { return a.time < b.time; };
  if (!std::is_sorted(events.begin(), events.end(), by_time)) {
    std::stable_sort(events.begin(), events.end(), by_time);
    warn(diagnostics, "events were not in time order; sorted");
  }
  EventStream stream;
  std::size_t ties = 0;
  for (const auto& e : events) ties += stream.push_back_perturbed(e) ? 1 : 0;
  if (ties > 0) warn(diagnostics, std::to_string(ties) + " event(s) with duplicate times moved forward by one ulp");
  return stream;
}

inline EventStream load_events(const std::filesystem::path& path, IdRegistry& ids,
                               Diagnostics* diagnostics = nullptr) {
  auto in = detail::open_input(path);
  return load_events(in, ids, diagnostics);
}

/// Inverse of load_events; times use the shortest round-trip representation.
inline void save_events(std::ostream& out, const EventStream& stream, const IdRegistry& ids) {
  for (const auto& e : stream) {
    out << "{\"t\":" << format_double(e.time) << ",\"src\":" << detail::json_string(ids.name(e.source)) << "}\n";
  }
}

inline void save_events(const std::filesystem::path& path, const EventStream& stream, const IdRegistry& ids) {
  auto out = detail::open_output(path);
  save_events(out, stream, ids);
}

/// Header-less CSV `broadcaster_id,follower_id`; duplicate edges collapse.
inline Network load_network(std::istream& in, IdRegistry& ids) {
  Network network;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError("expected broadcaster_id,follower_id", line_no);
    }
    const auto b = detail::trim(std::string_view(line).substr(0, comma));
    const auto f = detail::trim(std::string_view(line).substr(comma + 1));
    if (b.empty() || f.empty()) throw ParseError("empty user id", line_no);
    network.add_edge(ids.intern(b), ids.intern(f));
  }
  return network;
}

inline Network load_network(const std::filesystem::path& path, IdRegistry& ids) {
  auto in = detail::open_input(path);
  return load_network(in, ids);
}

/// Recorded data for counterfactual replay of one broadcaster.
struct ReplayDataset {
  SourceId broadcaster{};
  Horizon window;
  EventStream true_posts;
  std::vector<SourceId> followers;
  std::vector<EventStream> follower_feeds;  // never contains the broadcaster's events
  /// Per-follower significance, parallel to `followers` when present.
  std::optional<std::vector<SignificanceProfile>> significance;
};

/// Feeds are the union of each retained follower's followees' events inside
/// the window, minus the broadcaster's and the follower's own events.
/// Followers following more than `max_followees` users are dropped.
inline ReplayDataset build_replay_dataset(const EventStream& events, const Network& network, SourceId broadcaster,
                                          Horizon window, std::size_t max_followees = 500,
                                          Diagnostics* diagnostics = nullptr) {
  if (!network.contains(broadcaster)) throw ConfigError("broadcaster is not in the network");
  ReplayDataset data;
  data.broadcaster = broadcaster;
  data.window = window;
  const EventStream inside = events.window(window);

  for (SourceId f : network.followers_of(broadcaster)) {
    if (f == broadcaster) continue;
    if (network.followee_count(f) > max_followees) continue;
    data.followers.push_back(f);
  }
  // Per-source membership of each follower's feed.
  std::map<SourceId, std::vector<std::size_t>> audience;
  for (std::size_t j = 0; j < data.followers.size(); ++j) {
    for (SourceId b : network.followees_of(data.followers[j])) {
      if (b == broadcaster || b == data.followers[j]) continue;
      audience[b].push_back(j);
    }
  }
  data.follower_feeds.resize(data.followers.size());
  for (const auto& e : inside) {
    if (e.source == broadcaster) {
      data.true_posts.push_back(e);
      continue;
    }
    const auto it = audience.find(e.source);
    if (it == audience.end()) continue;
    for (std::size_t j : it->second) data.follower_feeds[j].push_back(e);
  }
  if (data.followers.empty()) warn(diagnostics, "broadcaster has no retained followers");
  return data;
}

/// Estimates each follower's significance from their own posting times.
inline void attach_significance(ReplayDataset& data, const EventStream& events, Granularity granularity,
                                double laplace, const CalendarMapping& calendar, Diagnostics* diagnostics = nullptr) {
  std::map<SourceId, std::size_t> index;
  for (std::size_t j = 0; j < data.followers.size(); ++j) index.emplace(data.followers[j], j);
  std::vector<std::vector<Event>> own(data.followers.size());
  for (const auto& e : events.window(data.window)) {
    const auto it = index.find(e.source);
    if (it != index.end()) own[it->second].push_back(e);
  }
  std::vector<SignificanceProfile> profiles;
  profiles.reserve(own.size());
  for (auto& v : own) {
    profiles.push_back(estimate_significance(EventStream::from_sorted(std::move(v)), granularity, laplace, calendar,
                                             diagnostics));
  }
  data.significance = std::move(profiles);
}

/// Dataset manifest: `key = value` lines, `#` comments. Relative paths are
/// resolved against the manifest's directory.
struct Manifest {
  std::int64_t epoch = 0;
  Time window_start = 0.0;
  Time window_end = 0.0;
  std::filesystem::path events;
  std::filesystem::path network;
  std::vector<std::string> broadcasters;  // empty: every user with followers
  std::size_t max_followees = 500;
  std::optional<Granularity> significance;
  double laplace = 1.0;
  std::int64_t utc_offset = 0;

  Horizon window() const { return make_horizon(window_start, window_end); }
  CalendarMapping calendar() const { return CalendarMapping{epoch, utc_offset}; }
};

inline Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  Manifest m;
  bool has_start = false, has_end = false;
  std::string line;
  std::size_t line_no = 0;
  auto to_int = [&](std::string_view v) -> std::int64_t {
    std::int64_t x = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) throw ParseError("expected an integer", line_no);
    return x;
  };
  auto to_double = [&](std::string_view v) {
    try {
      return parse_double(v);
    } catch (const ConfigError&) {
      throw ParseError("expected a number", line_no);
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    const auto key = detail::trim(body.substr(0, eq));
    const auto value = detail::trim(body.substr(eq + 1));
    if (key == "epoch") {
      m.epoch = to_int(value);
    } else if (key == "window_start") {
      m.window_start = to_double(value);
      has_start = true;
    } else if (key == "window_end") {
      m.window_end = to_double(value);
      has_end = true;
    } else if (key == "events") {
      m.events = base_dir / std::filesystem::path(std::string(value));
    } else if (key == "network") {
      m.network = base_dir / std::filesystem::path(std::string(value));
    } else if (key == "broadcasters") {
      std::stringstream list{std::string(value)};
      std::string id;
      while (std::getline(list, id, ',')) {
        const auto t = detail::trim(id);
        if (!t.empty()) m.broadcasters.emplace_back(t);
      }
    } else if (key == "max_followees") {
      const auto x = to_int(value);
      if (x < 0) throw ParseError("max_followees must be >= 0", line_no);
      m.max_followees = static_cast<std::size_t>(x);
    } else if (key == "significance") {
      if (value == "none") {
        m.significance.reset();
      } else {
        try {
          m.significance = parse_granularity(value);
        } catch (const ConfigError& e) {
          throw ParseError(e.what(), line_no);
        }
      }
    } else if (key == "laplace") {
      m.laplace = to_double(value);
    } else if (key == "tz_offset") {
      m.utc_offset = to_int(value);
    } else {
      throw ParseError("unknown manifest key '" + std::string(key) + "'", line_no);
    }
  }
  if (!has_start || !has_end) throw ParseError("manifest must declare window_start and window_end", 0);
  if (m.events.empty() || m.network.empty()) throw ParseError("manifest must declare events and network", 0);
  m.window();
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_manifest(in, path.parent_path());
}

inline constexpr std::string_view kReportHeader =
    "run,seed,policy,posts,position_over_time,time_at_top,normalized_position,normalized_time_at_top";

namespace detail {

inline std::string format_ratio(const std::optional<double>& ratio) {
  if (!ratio) return {};
  if (std::isnan(*ratio)) return "undefined";
  return format_double(*ratio);
}

inline std::optional<double> parse_ratio(std::string_view field) {
  if (field.empty()) return std::nullopt;
  if (field == "undefined") return std::numeric_limits<double>::quiet_NaN();
  return parse_double(field);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream row(line);
  while (std::getline(row, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

/// Rows are written in the given order. Run labels and policy names must not
/// contain commas.
inline void write_report_csv(std::ostream& out, const std::vector<MetricsReport>& reports) {
  out << kReportHeader << '\n';
  for (const auto& r : reports) {
    out << r.run << ',' << r.seed << ',' << r.policy << ',' << r.posts << ',' << format_double(r.position_over_time)
        << ',' << format_double(r.time_at_top) << ',' << detail::format_ratio(r.normalized_position) << ','
        << detail::format_ratio(r.normalized_time_at_top) << '\n';
  }
}

inline void write_report_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports) {
  auto out = detail::open_output(path);
  write_report_csv(out, reports);
}

/// Parses a report CSV. The horizon is not part of the format and stays empty.
inline std::vector<MetricsReport> read_report_csv(std::istream& in) {
  std::vector<MetricsReport> reports;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line != kReportHeader) throw ParseError("missing report header", 1);
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 8) throw ParseError("expected 8 fields", line_no);
    try {
      MetricsReport r;
      r.run = f[0];
      r.seed = std::stoull(f[1]);
      r.policy = f[2];
      r.posts = static_cast<std::size_t>(std::stoull(f[3]));
      r.position_over_time = parse_double(f[4]);
      r.time_at_top = parse_double(f[5]);
      r.normalized_position = detail::parse_ratio(f[6]);
      r.normalized_time_at_top = detail::parse_ratio(f[7]);
      reports.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError(std::string("bad report row: ") + e.what(), line_no);
    }
  }
  return reports;
}

/// JSON-lines trajectory: one horizon record, then posts, feed events and
/// rank change-points. Feed sources are numeric ids.
inline void save_trajectory(std::ostream& out, const SimulationTrajectory& traj) {
  out << "{\"kind\":\"horizon\",\"start\":" << format_double(traj.horizon.start)
      << ",\"end\":" << format_double(traj.horizon.end) << ",\"followers\":" << traj.follower_count()
      << ",\"post_feed_ties\":" << traj.post_feed_ties << "}\n";
  for (const auto& p : traj.own_posts) out << "{\"kind\":\"post\",\"t\":" << format_double(p.time) << "}\n";
  for (std::size_t j = 0; j < traj.feeds.size(); ++j) {
    for (const auto& e : traj.feeds[j]) {
      out << "{\"kind\":\"feed\",\"follower\":" << j << ",\"t\":" << format_double(e.time)
          << ",\"src\":" << to_underlying(e.source) << "}\n";
    }
  }
  for (std::size_t j = 0; j < traj.rank_paths.size(); ++j) {
    for (const auto& c : traj.rank_paths[j].changes()) {
      out << "{\"kind\":\"rank\",\"follower\":" << j << ",\"t\":" << format_double(c.time) << ",\"r\":" << c.rank
          << "}\n";
    }
  }
}

inline SimulationTrajectory load_trajectory(std::istream& in) {
  SimulationTrajectory traj;
  std::vector<std::vector<Event>> feeds;
  std::vector<std::vector<RankChange>> ranks;
  bool header = false;
  std::string line;
  std::size_t line_no = 0;
  auto follower_index = [&](const nlohmann::json& rec) {
    const auto j = rec.at("follower").get<std::size_t>();
    if (j >= feeds.size()) throw ParseError("follower index out of range", line_no);
    return j;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto kind = rec.at("kind").get<std::string>();
      if (kind == "horizon") {
        traj.horizon = Horizon{rec.at("start").get<double>(), rec.at("end").get<double>()};
        const auto n = rec.at("followers").get<std::size_t>();
        traj.post_feed_ties = rec.at("post_feed_ties").get<std::size_t>();
        feeds.assign(n, {});
        ranks.assign(n, {});
        header = true;
      } else if (!header) {
        throw ParseError("trajectory must start with a horizon record", line_no);
      } else if (kind == "post") {
        traj.own_posts.push_back(Event{rec.at("t").get<double>(), SourceId{0}});
      } else if (kind == "feed") {
        const auto j = follower_index(rec);
        feeds[j].push_back(Event{rec.at("t").get<double>(), SourceId{rec.at("src").get<std::uint32_t>()}});
      } else if (kind == "rank") {
        const auto j = follower_index(rec);
        ranks[j].push_back(RankChange{rec.at("t").get<double>(), rec.at("r").get<Rank>()});
      } else {
        throw ParseError("unknown record kind '" + kind + "'", line_no);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!header) throw ParseError("empty trajectory", 0);
  for (auto& f : feeds) traj.feeds.push_back(EventStream::from_sorted(std::move(f)));
  for (auto& r : ranks) traj.rank_paths.push_back(RankPath::from_changes(std::move(r), traj.horizon.end));
  return traj;
}

}  // namespace redqueen
