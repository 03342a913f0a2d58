#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "redqueen/common.hpp"
#include "redqueen/control_baselines.hpp"
#include "redqueen/control_online.hpp"
#include "redqueen/control_oracle.hpp"
#include "redqueen/data_io.hpp"
#include "redqueen/feed_sim.hpp"
#include "redqueen/metrics.hpp"
#include "redqueen/parallel.hpp"
#include "redqueen/point_process.hpp"
#include "redqueen/random.hpp"
#include "redqueen/significance.hpp"

namespace redqueen {

enum class Scenario { one_follower_hawkes, multi_follower_sinusoid, replay };
enum class Policy { redqueen, oracle, uniform, segment_offline, true_posts };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::one_follower_hawkes: return "one-follower-hawkes";
    case Scenario::multi_follower_sinusoid: return "multi-follower-sinusoid";
    case Scenario::replay: return "replay";
  }
  return "?";
}

inline std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::redqueen: return "redqueen";
    case Policy::oracle: return "oracle";
    case Policy::uniform: return "uniform";
    case Policy::segment_offline: return "segment-offline";
    case Policy::true_posts: return "true-posts";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view text) {
  for (auto s : {Scenario::one_follower_hawkes, Scenario::multi_follower_sinusoid, Scenario::replay}) {
    if (text == to_string(s)) return s;
  }
  throw ConfigError("unknown scenario '" + std::string(text) + "'");
}

inline Policy parse_policy(std::string_view text) {
  for (auto p : {Policy::redqueen, Policy::oracle, Policy::uniform, Policy::segment_offline, Policy::true_posts}) {
    if (text == to_string(p)) return p;
  }
  throw ConfigError("unknown policy '" + std::string(text) + "'");
}

struct ExperimentConfig {
  Scenario scenario = Scenario::one_follower_hawkes;
  std::vector<Policy> policies{Policy::redqueen};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  /// Target post counts, one run cell each. Ignored when `q` is set.
  std::vector<double> budgets;
  std::optional<double> q;
  bool significance = false;
  double tolerance = 0.1;
  std::size_t tune_max_iterations = 60;

  // one-follower-hawkes
  double hawkes_baseline = 10.0;
  double hawkes_excitation = 1.0;
  double hawkes_decay = 10.0;
  Time hawkes_horizon = 90.0;  // about 1000 feed events at the stationary rate
  std::size_t offline_segments = 10;
  std::size_t oracle_max_events = 20000;

  // multi-follower-sinusoid, time in seconds
  std::vector<std::size_t> follower_counts{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double peak_rate = 10.0 / 3600.0;
  double rate_offset = 0.0;
  std::size_t day_segments = 24;
  Time segment_length = 3600.0;

  // replay
  std::filesystem::path manifest;

  std::vector<double> effective_budgets() const {
    if (!budgets.empty()) return budgets;
    if (scenario == Scenario::multi_follower_sinusoid) return {30.0};
    return {50.0, 100.0, 200.0, 290.0};
  }

  void validate() const {
    if (policies.empty()) throw ConfigError("at least one policy is required");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (q && !(*q > 0.0)) throw ConfigError("q must be > 0");
    for (double b : budgets) {
      if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("budgets must be finite and >= 0");
    }
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
    const bool wants_true_posts =
        std::find(policies.begin(), policies.end(), Policy::true_posts) != policies.end();
    if (wants_true_posts && scenario != Scenario::replay) {
      throw ConfigError("policy true-posts needs recorded posts; use the replay scenario");
    }
    if (scenario == Scenario::replay && manifest.empty()) throw ConfigError("replay needs a manifest");
    if (scenario == Scenario::multi_follower_sinusoid) {
      if (follower_counts.empty()) throw ConfigError("follower counts must be non-empty");
      for (auto n : follower_counts) {
        if (n == 0) throw ConfigError("follower count must be >= 1");
      }
      if (!(peak_rate >= rate_offset) || !(rate_offset >= 0.0)) {
        throw ConfigError("sinusoid rates need 0 <= offset <= peak");
      }
      if (day_segments == 0 || !(segment_length > 0.0)) throw ConfigError("sinusoid needs positive segments");
      const bool wants_oracle = std::find(policies.begin(), policies.end(), Policy::oracle) != policies.end();
      const auto most = *std::max_element(follower_counts.begin(), follower_counts.end());
      if (wants_oracle && most > 1) {
        throw ConfigError("the oracle policy supports one follower only; drop it or use --followers 1");
      }
    }
    if (scenario == Scenario::one_follower_hawkes) {
      HawkesParams(PiecewiseRate::constant(hawkes_baseline), hawkes_excitation, hawkes_decay);
      make_horizon(0.0, hawkes_horizon);
      if (offline_segments == 0) throw ConfigError("offline segments must be >= 1");
    }
  }
};

/// Everything a seed's run needs: the revealed feeds and what offline
/// baselines are allowed to know about them.
struct World {
  Horizon horizon;
  std::vector<EventStream> feeds;
  std::vector<PiecewiseRate> offline_rates;
  std::optional<EventStream> true_posts;
  std::vector<PiecewiseRate> significance;  // empty: s = 1
};

struct CellResult {
  std::string run;
  double q = 0.0;
  std::optional<TuneResult> tuning;
  std::vector<MetricsReport> reports;  // policy-major, then seed
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  Diagnostics diagnostics;

  std::vector<MetricsReport> reports() const {
    std::vector<MetricsReport> all;
    for (const auto& c : cells) all.insert(all.end(), c.reports.begin(), c.reports.end());
    return all;
  }
};

namespace detail {

inline constexpr std::uint64_t kFeedStream = 100;
inline constexpr std::uint64_t kPhaseStream = 50;
inline constexpr std::uint64_t kRedQueenStream = 1;
inline constexpr std::uint64_t kUniformStream = 2;

/// Empirical per-segment rate of a revealed feed.
inline PiecewiseRate empirical_rate(const EventStream& feed, Horizon horizon, std::size_t segments) {
  std::vector<double> rates(segments, 0.0);
  const double width = horizon.length() / static_cast<double>(segments);
  for (std::size_t k = 0; k < segments; ++k) {
    const Time a = horizon.start + width * static_cast<double>(k);
    const Time b = k + 1 == segments ? horizon.end : horizon.start + width * static_cast<double>(k + 1);
    rates[k] = static_cast<double>(feed.count_in(a, b)) / (b - a);
  }
  return PiecewiseRate::uniform_segments(horizon, std::move(rates));
}

inline SimulationTrajectory play(const World& world, Controller& controller) {
  std::vector<FeedSource> sources;
  sources.reserve(world.feeds.size());
  for (const auto& f : world.feeds) sources.push_back(FeedSource::recorded(f));
  return simulate(std::move(sources), controller, world.horizon);
}

inline SimulationTrajectory run_redqueen(const World& world, double q, std::uint64_t seed) {
  RedQueenParams params{q, world.significance};
  RedQueenController controller(std::move(params), Rng(derive_seed(seed, kRedQueenStream)));
  return play(world, controller);
}

inline SimulationTrajectory run_playback(const World& world, EventStream posts) {
  PlaybackController controller(std::move(posts));
  return play(world, controller);
}

inline std::string redqueen_label(const World& world) {
  return world.significance.empty() ? "redqueen" : "redqueen-significance";
}

/// Runs every requested policy on one seed's world. Budget-matched baselines
/// receive RedQueen's realized post count for this seed.
inline std::vector<MetricsReport> run_seed(const World& world, const std::vector<Policy>& policies, double q,
                                           std::uint64_t seed, const std::string& run,
                                           std::size_t oracle_max_events, Diagnostics& diagnostics) {
  const SimulationTrajectory rq = run_redqueen(world, q, seed);
  const std::size_t budget = rq.post_count();
  std::optional<MetricsReport> reference;
  if (world.true_posts) reference = evaluate(run_playback(world, *world.true_posts), run, "true-posts", seed);

  std::vector<MetricsReport> out;
  for (Policy p : policies) {
    MetricsReport report;
    switch (p) {
      case Policy::redqueen:
        report = evaluate(rq, run, redqueen_label(world), seed);
        break;
      case Policy::true_posts:
        report = *reference;
        break;
      case Policy::uniform: {
        const auto posts = uniform_poisson_poster(BudgetPolicyParams{static_cast<double>(budget), world.horizon},
                                                  Rng(derive_seed(seed, kUniformStream)));
        report = evaluate(run_playback(world, posts), run, "uniform", seed);
        break;
      }
      case Policy::segment_offline: {
        const auto posts = segment_offline_poster(world.offline_rates,
                                                  BudgetPolicyParams{static_cast<double>(budget), world.horizon});
        report = evaluate(run_playback(world, posts), run, "segment-offline", seed);
        break;
      }
      case Policy::oracle: {
        if (world.feeds.size() != 1) {
          diagnostics.warn(run + ": oracle skipped, it supports one follower only");
          continue;
        }
        const EventStream inside = world.feeds[0].window(world.horizon);
        if (inside.size() > oracle_max_events) {
          throw ConfigError(run + ": oracle needs O(m^2) work and m = " + std::to_string(inside.size()) +
                            " feed events exceeds the limit " + std::to_string(oracle_max_events) +
                            "; shorten the horizon, raise --oracle-max-events or drop the oracle");
        }
        EventStream posts;
        if (!inside.empty() && budget > 0) {
          const auto budgeted = oracle_for_budget(instance_from_feed(inside, world.horizon, 0, 1.0), budget);
          posts = schedule_post_times(budgeted.schedule, inside, world.horizon);
        }
        report = evaluate(run_playback(world, posts), run, "oracle", seed);
        break;
      }
    }
    if (reference) report = normalize(std::move(report), *reference);
    out.push_back(std::move(report));
  }
  return out;
}

/// Tunes or fixes q for a cell, then runs all seeds in parallel. Reports are
/// ordered by policy, then seed.
template <class MakeWorld>
CellResult run_cell(const ExperimentConfig& config, std::string run, std::optional<double> budget,
                    MakeWorld&& make_world, Diagnostics& diagnostics) {
  CellResult cell;
  cell.run = std::move(run);
  const auto worlds = parallel_map(config.seeds.size(), [&](std::size_t i) { return make_world(config.seeds[i]); });

  if (config.q) {
    cell.q = *config.q;
  } else if (*budget < 0.5) {
    cell.q = kInfinity;
  } else {
    std::map<std::uint64_t, std::size_t> index;
    for (std::size_t i = 0; i < config.seeds.size(); ++i) index.emplace(config.seeds[i], i);
    TuneOptions options;
    options.tolerance = config.tolerance;
    options.max_iterations = config.tune_max_iterations;
    const auto posts = [&](double q, std::uint64_t seed) {
      return run_redqueen(worlds[index.at(seed)], q, seed).post_count();
    };
    cell.tuning = tune_q(*budget, posts, config.seeds, options);
    cell.q = cell.tuning->q;
    if (!cell.tuning->converged) diagnostics.warn(cell.run + ": " + cell.tuning->diagnostic);
  }

  std::vector<Diagnostics> seed_diagnostics(config.seeds.size());
  const auto per_seed = parallel_map(config.seeds.size(), [&](std::size_t i) {
    return run_seed(worlds[i], config.policies, cell.q, config.seeds[i], cell.run, config.oracle_max_events,
                    seed_diagnostics[i]);
  });
  for (const auto& d : seed_diagnostics) {
    for (const auto& w : d.warnings) diagnostics.warn(w);
  }
  const std::size_t policies = per_seed.empty() ? 0 : per_seed.front().size();
  for (std::size_t p = 0; p < policies; ++p) {
    for (const auto& reports : per_seed) cell.reports.push_back(reports[p]);
  }
  return cell;
}

inline std::string cell_label(const ExperimentConfig& config, double budget) {
  return config.q ? "q=" + format_double(*config.q) : "budget=" + format_double(budget);
}

}  // namespace detail

/// Half-sinusoid segment rates for one follower: offset + (peak - offset) *
/// sin(pi * frac((k + 1/2) / K + phase)) for segments k = 0..K-1.
inline std::vector<double> sinusoid_segment_rates(std::size_t segments, double peak, double offset, double phase) {
  std::vector<double> rates(segments);
  for (std::size_t k = 0; k < segments; ++k) {
    double x = (static_cast<double>(k) + 0.5) / static_cast<double>(segments) + phase;
    x -= std::floor(x);
    rates[k] = offset + (peak - offset) * std::sin(std::numbers::pi * x);
  }
  return rates;
}

inline World make_hawkes_world(const ExperimentConfig& config, std::uint64_t seed) {
  World w;
  w.horizon = make_horizon(0.0, config.hawkes_horizon);
  const HawkesParams params(PiecewiseRate::constant(config.hawkes_baseline), config.hawkes_excitation,
                            config.hawkes_decay);
  w.feeds.push_back(sample_hawkes(params, w.horizon, Rng(derive_seed(seed, detail::kFeedStream)), SourceId{1}));
  w.offline_rates.push_back(detail::empirical_rate(w.feeds[0], w.horizon, config.offline_segments));
  return w;
}

inline World make_sinusoid_world(const ExperimentConfig& config, std::size_t followers, std::uint64_t seed) {
  World w;
  w.horizon = make_horizon(0.0, config.segment_length * static_cast<double>(config.day_segments));
  Rng phases(derive_seed(seed, detail::kPhaseStream));
  for (std::size_t j = 0; j < followers; ++j) {
    const double phase = phases.uniform();
    auto rate = PiecewiseRate::uniform_segments(
        w.horizon, sinusoid_segment_rates(config.day_segments, config.peak_rate, config.rate_offset, phase));
    w.feeds.push_back(sample_piecewise_poisson(rate, w.horizon, Rng(derive_seed(seed, detail::kFeedStream + j)),
                                               SourceId{static_cast<std::uint32_t>(j + 1)}));
    w.offline_rates.push_back(std::move(rate));
  }
  return w;
}

/// Budget sweep on a single Hawkes feed; the oracle sees the revealed feed.
inline ExperimentResult run_one_follower_hawkes(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult result;
  const auto make = [&](std::uint64_t seed) { return make_hawkes_world(config, seed); };
  if (config.q) {
    result.cells.push_back(detail::run_cell(config, detail::cell_label(config, 0.0), std::nullopt, make,
                                            result.diagnostics));
    return result;
  }
  for (double budget : config.effective_budgets()) {
    result.cells.push_back(
        detail::run_cell(config, detail::cell_label(config, budget), budget, make, result.diagnostics));
  }
  return result;
}

/// Follower-count sweep on one day of piecewise-constant feeds.
inline ExperimentResult run_multi_follower_sinusoid(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult result;
  const std::vector<std::optional<double>> budgets = [&] {
    std::vector<std::optional<double>> b;
    if (config.q) {
      b.emplace_back();
    } else {
      for (double x : config.effective_budgets()) b.emplace_back(x);
    }
    return b;
  }();
  for (std::size_t n : config.follower_counts) {
    for (const auto& budget : budgets) {
      const auto make = [&](std::uint64_t seed) { return make_sinusoid_world(config, n, seed); };
      const std::string label =
          "followers=" + std::to_string(n) + "/" + detail::cell_label(config, budget.value_or(0.0));
      result.cells.push_back(detail::run_cell(config, label, budget, make, result.diagnostics));
    }
  }
  return result;
}

/// World for replaying one recorded broadcaster.
inline World make_replay_world(const ReplayDataset& data, std::size_t offline_segments,
                               const CalendarMapping& calendar, bool use_significance) {
  World w;
  w.horizon = data.window;
  w.feeds = data.follower_feeds;
  w.true_posts = data.true_posts;
  for (const auto& f : data.follower_feeds) {
    w.offline_rates.push_back(detail::empirical_rate(f, data.window, offline_segments));
  }
  if (use_significance) {
    if (!data.significance) throw ConfigError("significance requested but the dataset has no profiles");
    for (const auto& profile : *data.significance) {
      w.significance.push_back(significance_schedule(profile, data.window, calendar));
    }
  }
  return w;
}

/// Counterfactual replay for every broadcaster in the manifest. q is tuned per
/// broadcaster so RedQueen's mean post count matches the true post count.
inline ExperimentResult run_replay(const ExperimentConfig& config, const Manifest& manifest) {
  config.validate();
  ExperimentResult result;
  IdRegistry ids;
  const EventStream events = load_events(manifest.events, ids, &result.diagnostics);
  const Network network = load_network(manifest.network, ids);

  std::vector<std::string> broadcasters = manifest.broadcasters;
  if (broadcasters.empty()) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const SourceId id{static_cast<std::uint32_t>(i)};
      if (!network.followers_of(id).empty()) broadcasters.push_back(ids.name(id));
    }
    std::sort(broadcasters.begin(), broadcasters.end());
  }
  const bool use_significance = config.significance;
  const Granularity granularity = manifest.significance.value_or(Granularity::weekday);

  for (const auto& name : broadcasters) {
    const auto id = ids.find(name);
    if (!id) throw ConfigError("broadcaster '" + name + "' does not appear in the data");
    ReplayDataset data =
        build_replay_dataset(events, network, *id, manifest.window(), manifest.max_followees, &result.diagnostics);
    const std::string label = "broadcaster=" + name;
    if (data.followers.empty()) continue;
    const bool all_empty = std::all_of(data.follower_feeds.begin(), data.follower_feeds.end(),
                                       [](const EventStream& f) { return f.empty(); });
    if (all_empty) {
      result.diagnostics.warn(label + ": every follower feed is empty; skipped");
      continue;
    }
    if (use_significance) {
      attach_significance(data, events, granularity, manifest.laplace, manifest.calendar(), &result.diagnostics);
    }
    const World world = make_replay_world(data, config.offline_segments, manifest.calendar(), use_significance);
    const auto make = [&](std::uint64_t) { return world; };
    const double budget = static_cast<double>(data.true_posts.size());
    result.cells.push_back(detail::run_cell(config, label, budget, make, result.diagnostics));
  }
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  switch (config.scenario) {
    case Scenario::one_follower_hawkes: return run_one_follower_hawkes(config);
    case Scenario::multi_follower_sinusoid: return run_multi_follower_sinusoid(config);
    case Scenario::replay: return run_replay(config, load_manifest(config.manifest));
  }
  throw ConfigError("unknown scenario");
}

inline void emit_report(const std::vector<MetricsReport>& reports, const std::filesystem::path& path) {
  write_report_csv(path, reports);
}

/// Long-format summary: one row per (run, policy, measure) with mean,
/// standard error, median and quartiles across seeds.
inline void write_summary_csv(std::ostream& out, const std::vector<MetricsReport>& reports) {
  out << "run,policy,measure,count,mean,standard_error,median,lower_quartile,upper_quartile\n";
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& r : reports) {
    const std::pair key{r.run, r.policy};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  using Getter = std::optional<double> (*)(const MetricsReport&);
  const std::pair<const char*, Getter> measures[] = {
      {"posts", [](const MetricsReport& r) -> std::optional<double> { return static_cast<double>(r.posts); }},
      {"position_over_time", [](const MetricsReport& r) -> std::optional<double> { return r.position_over_time; }},
      {"time_at_top", [](const MetricsReport& r) -> std::optional<double> { return r.time_at_top; }},
      {"normalized_position", [](const MetricsReport& r) { return r.normalized_position; }},
      {"normalized_time_at_top", [](const MetricsReport& r) { return r.normalized_time_at_top; }},
  };
  for (const auto& [run, policy] : groups) {
    for (const auto& [name, get] : measures) {
      std::vector<double> values;
      for (const auto& r : reports) {
        if (r.run != run || r.policy != policy) continue;
        if (const auto v = get(r)) values.push_back(*v);
      }
      if (values.empty()) continue;
      const Summary s = summarize(values);
      out << run << ',' << policy << ',' << name << ',' << s.count << ',' << format_double(s.mean) << ','
          << format_double(s.standard_error) << ',' << format_double(s.median) << ','
          << format_double(s.lower_quartile) << ',' << format_double(s.upper_quartile) << '\n';
    }
  }
}

}  // namespace redqueen
