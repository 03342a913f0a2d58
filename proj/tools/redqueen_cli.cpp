// Command-line harness: synthetic experiments, counterfactual replay,
// q tuning and significance estimation.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "redqueen/redqueen.hpp"

namespace {

using namespace redqueen;
using nlohmann::json;

struct CommonFlags {
  std::string scenario = "one-follower-hawkes";
  std::vector<std::string> policies{"redqueen"};
  std::vector<std::uint64_t> seeds;
  std::vector<double> budgets;
  std::optional<double> q;
  bool significance = false;
  double tolerance = 0.1;
  std::vector<std::size_t> followers;
  std::optional<double> peak_rate;
  std::optional<double> rate_offset;
  std::optional<double> horizon;
  std::optional<std::size_t> oracle_max_events;
  std::optional<std::size_t> offline_segments;
  std::string manifest;
  std::string out;
  std::string summary;
};

void add_experiment_flags(CLI::App& cmd, CommonFlags& f, bool with_scenario) {
  if (with_scenario) {
    cmd.add_option("--scenario", f.scenario, "one-follower-hawkes | multi-follower-sinusoid | replay")
        ->capture_default_str();
  }
  cmd.add_option("--policy", f.policies, "redqueen, oracle, uniform, segment-offline, true-posts")
      ->delimiter(',')
      ->capture_default_str();
  cmd.add_option("--seeds", f.seeds, "comma-separated seeds (default 1..10)")->delimiter(',');
  cmd.add_option("--q", f.q, "fixed posting cost; otherwise q is tuned per budget");
  cmd.add_flag("--significance", f.significance, "weight ranks by follower significance (replay)");
  cmd.add_option("--tol", f.tolerance, "relative tolerance when tuning q to a budget")->capture_default_str();
  cmd.add_option("--offline-segments", f.offline_segments, "segments seen by the segment-offline baseline");
  cmd.add_option("--oracle-max-events", f.oracle_max_events, "refuse the oracle above this many feed events");
  cmd.add_option("--out", f.out, "report CSV path (default stdout)");
  cmd.add_option("--summary", f.summary, "summary CSV path");
}

ExperimentConfig to_config(const CommonFlags& f) {
  ExperimentConfig c;
  c.scenario = parse_scenario(f.scenario);
  c.policies.clear();
  for (const auto& p : f.policies) c.policies.push_back(parse_policy(p));
  if (!f.seeds.empty()) c.seeds = f.seeds;
  c.budgets = f.budgets;
  c.q = f.q;
  c.significance = f.significance;
  c.tolerance = f.tolerance;
  if (!f.followers.empty()) c.follower_counts = f.followers;
  if (f.peak_rate) c.peak_rate = *f.peak_rate;
  if (f.rate_offset) c.rate_offset = *f.rate_offset;
  if (f.horizon) c.hawkes_horizon = *f.horizon;
  if (f.oracle_max_events) c.oracle_max_events = *f.oracle_max_events;
  if (f.offline_segments) c.offline_segments = *f.offline_segments;
  c.manifest = f.manifest;
  return c;
}

void print_warnings(const Diagnostics& d) {
  for (const auto& w : d.warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
}

void emit(const ExperimentResult& result, const CommonFlags& f) {
  print_warnings(result.diagnostics);
  const auto reports = result.reports();
  if (f.out.empty()) {
    write_report_csv(std::cout, reports);
  } else {
    emit_report(reports, f.out);
  }
  if (!f.summary.empty()) {
    std::ofstream out(f.summary, std::ios::binary);
    if (!out) throw Error("cannot write " + f.summary);
    write_summary_csv(out, reports);
  }
}

int run_tune(const CommonFlags& f, double target) {
  ExperimentConfig c = to_config(f);
  c.budgets = {target};
  c.q.reset();
  c.policies = {Policy::redqueen};
  c.validate();
  if (c.scenario == Scenario::replay) {
    throw ConfigError("tune-q works on synthetic scenarios; replay tunes q per broadcaster");
  }
  if (c.scenario == Scenario::multi_follower_sinusoid && c.follower_counts.size() != 1) {
    throw ConfigError("tune-q needs a single --followers value");
  }
  const auto worlds = parallel_map(c.seeds.size(), [&](std::size_t i) {
    return c.scenario == Scenario::one_follower_hawkes ? make_hawkes_world(c, c.seeds[i])
                                                       : make_sinusoid_world(c, c.follower_counts[0], c.seeds[i]);
  });
  std::map<std::uint64_t, std::size_t> index;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) index.emplace(c.seeds[i], i);
  TuneOptions options;
  options.tolerance = c.tolerance;
  const auto result = tune_q(
      target,
      [&](double q, std::uint64_t seed) {
        return detail::run_redqueen(worlds[index.at(seed)], q, seed).post_count();
      },
      c.seeds, options);
  json out{{"target", target},         {"q", result.q},
           {"mean_posts", result.mean_posts}, {"converged", result.converged},
           {"lower", result.lower},    {"upper", result.upper},
           {"evaluations", result.evaluations}};
  if (!result.diagnostic.empty()) out["diagnostic"] = result.diagnostic;
  std::cout << out.dump() << '\n';
  return result.converged ? 0 : 3;
}

int run_estimate(const std::string& events_path, const std::string& granularity_text, double laplace,
                 std::int64_t epoch, std::int64_t tz_offset, const std::vector<std::string>& users,
                 const std::string& out_path) {
  const Granularity granularity = parse_granularity(granularity_text);
  const CalendarMapping calendar{epoch, tz_offset};
  IdRegistry ids;
  Diagnostics diagnostics;
  const EventStream events = load_events(std::filesystem::path(events_path), ids, &diagnostics);

  std::vector<std::string> names = users;
  if (names.empty()) {
    for (std::size_t i = 0; i < ids.size(); ++i) names.push_back(ids.name(SourceId{static_cast<std::uint32_t>(i)}));
    std::sort(names.begin(), names.end());
  }
  std::vector<std::pair<std::string, SignificanceProfile>> profiles;
  for (const auto& name : names) {
    const auto id = ids.find(name);
    std::vector<Event> own;
    if (id) {
      for (const auto& e : events) {
        if (e.source == *id) own.push_back(e);
      }
    } else {
      diagnostics.warn("user '" + name + "' has no events");
    }
    profiles.emplace_back(name, estimate_significance(EventStream::from_sorted(std::move(own)), granularity, laplace,
                                                      calendar, &diagnostics));
  }
  print_warnings(diagnostics);
  if (out_path.empty()) {
    write_significance_csv(std::cout, profiles);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error("cannot write " + out_path);
    write_significance_csv(out, profiles);
  }
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const OrderingError*>(&e)) return "ordering";
  return "runtime";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online visibility control for broadcasters in social feeds"};
  app.set_config("--config", "", "TOML/INI file mirroring the command-line flags");
  app.require_subcommand(1);

  CommonFlags sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "run a synthetic or replay experiment");
  add_experiment_flags(*simulate_cmd, sim, true);
  simulate_cmd->add_option("--budget", sim.budgets, "target post counts, one run cell each")->delimiter(',');
  simulate_cmd->add_option("--followers", sim.followers, "follower counts (sinusoid scenario)")->delimiter(',');
  simulate_cmd->add_option("--peak-rate", sim.peak_rate, "sinusoid peak feed rate per second per follower");
  simulate_cmd->add_option("--rate-offset", sim.rate_offset, "sinusoid floor rate per second");
  simulate_cmd->add_option("--horizon", sim.horizon, "Hawkes scenario horizon length");
  simulate_cmd->add_option("--manifest", sim.manifest, "dataset manifest (replay scenario)");

  CommonFlags tune;
  double target = 0.0;
  auto* tune_cmd = app.add_subcommand("tune-q", "find q whose mean post count hits a target");
  tune_cmd->add_option("--target", target, "target mean post count")->required();
  tune_cmd->add_option("--scenario", tune.scenario, "one-follower-hawkes | multi-follower-sinusoid")
      ->capture_default_str();
  tune_cmd->add_option("--seeds", tune.seeds, "comma-separated seeds (default 1..10)")->delimiter(',');
  tune_cmd->add_option("--tol", tune.tolerance, "relative tolerance")->capture_default_str();
  tune_cmd->add_option("--followers", tune.followers, "follower count (sinusoid scenario)")->delimiter(',');
  tune_cmd->add_option("--peak-rate", tune.peak_rate, "sinusoid peak feed rate per second per follower");
  tune_cmd->add_option("--rate-offset", tune.rate_offset, "sinusoid floor rate per second");
  tune_cmd->add_option("--horizon", tune.horizon, "Hawkes scenario horizon length");

  CommonFlags replay;
  auto* replay_cmd = app.add_subcommand("replay", "counterfactual replay of recorded broadcasters");
  add_experiment_flags(*replay_cmd, replay, false);
  replay_cmd->add_option("--manifest", replay.manifest, "dataset manifest")->required();
  replay.policies = {"true-posts", "redqueen"};

  std::string events_path, granularity = "weekday", significance_out;
  double laplace = 1.0;
  std::int64_t epoch = 0, tz_offset = 0;
  std::vector<std::string> users;
  auto* estimate_cmd = app.add_subcommand("estimate-significance", "per-user online-time significance profiles");
  estimate_cmd->add_option("--events", events_path, "JSON-lines event log")->required();
  estimate_cmd->add_option("--granularity", granularity, "weekday | weekday-hour")->capture_default_str();
  estimate_cmd->add_option("--laplace", laplace, "additive smoothing per bucket")->capture_default_str();
  estimate_cmd->add_option("--epoch", epoch, "unix seconds of relative time 0")->capture_default_str();
  estimate_cmd->add_option("--tz-offset", tz_offset, "seconds added to UTC for local time")->capture_default_str();
  estimate_cmd->add_option("--users", users, "users to profile (default: all)")->delimiter(',');
  estimate_cmd->add_option("--out", significance_out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
    return 2;
  }

  try {
    if (*simulate_cmd) {
      emit(run_experiment(to_config(sim)), sim);
    } else if (*tune_cmd) {
      return run_tune(tune, target);
    } else if (*replay_cmd) {
      replay.scenario = "replay";
      ExperimentConfig config = to_config(replay);
      emit(run_replay(config, load_manifest(config.manifest)), replay);
    } else if (*estimate_cmd) {
      return run_estimate(events_path, granularity, laplace, epoch, tz_offset, users, significance_out);
    }
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", error_kind(e)}}.dump() << '\n';
    return 1;
  }
  return 0;
}
