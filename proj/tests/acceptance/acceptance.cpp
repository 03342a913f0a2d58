// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "redqueen/redqueen.hpp"
#include "support/stats.hpp"

namespace {

using namespace redqueen;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fixed(double x, int digits = 4) {
  std::ostringstream out;
  out.precision(digits);
  out << x;
  return out.str();
}

// 1. Iterated rank_step equals rank_from_history at every change-point.
Outcome rank_equivalence() {
  Rng rng(2024);
  std::size_t checks = 0, mismatches = 0, ties = 0;
  for (int seq = 0; seq < 1000; ++seq) {
    const std::size_t followers = 1 + rng.next_u64() % 4;
    const std::size_t length = 1 + rng.next_u64() % 1000;
    const Rank initial = rng.next_u64() % 3;
    std::vector<RankEvent> events;
    Time t = 0.0;
    bool posted_now = false;
    std::vector<bool> fed_now(followers, false);
    auto advance = [&] {
      t += 1.0;
      posted_now = false;
      std::fill(fed_now.begin(), fed_now.end(), false);
    };
    for (std::size_t i = 0; i < length; ++i) {
      if (rng.uniform() < 0.7) advance();
      if (rng.uniform() < 0.15) {
        if (posted_now) advance();
        events.emplace_back(OwnPost{t});
        posted_now = true;
      } else {
        const std::size_t j = rng.next_u64() % followers;
        if (posted_now || fed_now[j]) advance();  // feed-first at a shared instant
        events.emplace_back(FeedArrival{t, j});
        fed_now[j] = true;
      }
    }

    std::vector<Event> own;
    std::vector<std::vector<Event>> feed(followers);
    for (const auto& e : events) {
      if (const auto* p = std::get_if<OwnPost>(&e)) {
        if (!feed.empty() && std::any_of(feed.begin(), feed.end(), [&](const auto& f) {
              return !f.empty() && f.back().time == p->time;
            })) {
          ++ties;
        }
        own.push_back({p->time, SourceId{0}});
      } else {
        const auto& a = std::get<FeedArrival>(e);
        feed[a.follower].push_back({a.time, SourceId{1}});
      }
    }
    const EventStream own_stream = EventStream::from_sorted(own);
    std::vector<EventStream> feed_streams;
    for (auto& f : feed) feed_streams.push_back(EventStream::from_sorted(f));

    RankState state(followers, 0.0, initial);
    for (std::size_t i = 0; i < events.size(); ++i) {
      state = rank_step(state, events[i]);
      const Time now = event_time(events[i]);
      if (i + 1 < events.size() && event_time(events[i + 1]) == now) continue;
      for (std::size_t j = 0; j < followers; ++j) {
        ++checks;
        if (state.rank(j) != rank_from_history(own_stream, feed_streams[j], now, initial)) ++mismatches;
      }
    }
  }
  return {mismatches == 0, std::to_string(checks) + " change-point checks, " + std::to_string(mismatches) +
                               " mismatches, " + std::to_string(ties) + " post/feed ties"};
}

// 2. Long-run Hawkes rate and Poisson gaps.
Outcome hawkes_sampler() {
  const HawkesParams p(PiecewiseRate::constant(10.0), 1.0, 10.0);
  const Time T = 2000.0;
  const auto s = sample_hawkes(p, Horizon{0.0, T}, Rng(99));
  const double rate = static_cast<double>(s.size()) / T;
  const double expected = p.stationary_rate(10.0);
  const double rel = std::abs(rate / expected - 1.0);

  const HawkesParams poisson(PiecewiseRate::constant(10.0), 0.0, 10.0);
  const auto q = sample_hawkes(poisson, Horizon{0.0, T}, Rng(100));
  std::vector<double> gaps;
  for (std::size_t i = 1; i < q.size(); ++i) gaps.push_back(q[i].time - q[i - 1].time);
  const double d = testing::ks_statistic(gaps, [](double x) { return 1.0 - std::exp(-10.0 * x); });
  const double crit = testing::ks_critical(gaps.size());
  return {s.size() >= 10000 && rel < 0.05 && d < crit,
          std::to_string(s.size()) + " events, rate " + fixed(rate, 6) + " vs " + fixed(expected, 6) +
              " (rel " + fixed(rel, 3) + "); alpha=0 KS D=" + fixed(d, 3) + " < " + fixed(crit, 3)};
}

// 3. Closed-form decay against step-1e-6 forward Euler of the intensity SDE.
Outcome decay_law() {
  Rng rng(7);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double base = 1.0 + 19.0 * rng.uniform();
    const double w = 0.5 + 9.5 * rng.uniform();
    const double excess = 0.25 * base * rng.uniform();
    const double alpha = 0.08 * base * rng.uniform();
    const long steps = 1 + static_cast<long>(rng.next_u64() % 1000000);
    std::vector<long> jumps;
    for (int k = static_cast<int>(rng.next_u64() % 4); k > 0; --k) {
      jumps.push_back(1 + static_cast<long>(rng.next_u64() % static_cast<std::uint64_t>(steps)));
    }
    std::sort(jumps.begin(), jumps.end());
    const HawkesParams p(PiecewiseRate::constant(base), alpha, w, Stability::allow_unstable);

    IntensityState exact{base + excess, 0.0};
    for (long j : jumps) exact = apply_jump(decay_intensity(exact, p, static_cast<double>(j) * h), p);
    exact = decay_intensity(exact, p, static_cast<double>(steps) * h);

    double x = base + excess;
    std::size_t next_jump = 0;
    for (long n = 1; n <= steps; ++n) {
      x += h * w * (base - x);
      while (next_jump < jumps.size() && jumps[next_jump] == n) {
        x += alpha;
        ++next_jump;
      }
    }
    worst = std::max(worst, std::abs(x - exact.current) / exact.current);
  }
  return {worst <= 1e-6, "max relative error " + fixed(worst, 3) + " over 100 states"};
}

// 4. next_post_time against an independent thinning sampler of u*(t) = sqrt(s/q) r(t).
Outcome first_post_distribution() {
  const double s = 2.0, q = 0.5, c = std::sqrt(s / q);
  const Horizon h{0.0, 5.0};
  const auto feed_rate = PiecewiseRate::constant(10.0);
  const RedQueenParams params{q, {PiecewiseRate::constant(s)}};
  std::vector<double> online, thinned;
  for (std::uint64_t run = 0; run < 10000; ++run) {
    {
      const auto feed = sample_piecewise_poisson(feed_rate, h, Rng(derive_seed(run, 1)));
      RecordedFeedCursor cursor({feed});
      Rng rng(derive_seed(run, 2));
      online.push_back(next_post_time(cursor, params, RankState(1, h.start), rng).post_time);
    }
    {
      const auto feed = sample_piecewise_poisson(feed_rate, h, Rng(derive_seed(run, 3)));
      Rng rng(derive_seed(run, 4));
      const double bound = c * static_cast<double>(feed.size());
      Time t = h.start;
      Time accepted = kInfinity;
      while (bound > 0.0) {
        t += rng.exponential(bound);
        const double u = c * static_cast<double>(feed.count_until(t));
        if (rng.uniform() * bound < u) {
          accepted = t;
          break;
        }
      }
      thinned.push_back(accepted);
    }
  }
  const double d = testing::ks_two_sample(online, thinned);
  const double crit = testing::ks_two_sample_critical(online.size(), thinned.size());
  return {d < crit, "two-sample KS D=" + fixed(d, 3) + " < " + fixed(crit, 3) + " (10^4 paired runs, mean " +
                        fixed(testing::mean(online), 4) + " vs " + fixed(testing::mean(thinned), 4) + ")"};
}

// 5. Backward induction equals exhaustive search.
Outcome oracle_optimality() {
  Rng rng(5);
  std::size_t exact = 0, decisions_equal = 0;
  for (int i = 0; i < 1000; ++i) {
    OracleInstance inst;
    const std::size_t m = rng.next_u64() % 13;  // m <= 12, m + 1 stages
    inst.initial_rank = rng.next_u64() % 3;
    for (std::size_t k = 0; k <= m; ++k) inst.widths.push_back(0.1 + 1.9 * rng.uniform());
    inst.q = std::exp(std::log(0.01) + rng.uniform() * std::log(1e4));
    const auto dp = oracle_schedule(inst);
    const auto bf = brute_force_schedule(inst);
    exact += dp.cost == bf.cost ? 1 : 0;
    decisions_equal += dp.decisions == bf.decisions ? 1 : 0;
  }
  return {exact == 1000, std::to_string(exact) + "/1000 costs bit-identical (" + std::to_string(decisions_equal) +
                             " identical schedules)"};
}

ExperimentConfig hawkes_config() {
  ExperimentConfig c;
  c.scenario = Scenario::one_follower_hawkes;
  return c;
}

// 6. Posting decreases with q; tune_q hits a target within 10%.
Outcome q_monotonicity_and_tuning() {
  const ExperimentConfig c = hawkes_config();
  std::vector<std::uint64_t> seeds(20);
  std::iota(seeds.begin(), seeds.end(), 1);
  const auto worlds = parallel_map(seeds.size(), [&](std::size_t i) { return make_hawkes_world(c, seeds[i]); });
  const auto posts = [&](double q, std::uint64_t seed) {
    return detail::run_redqueen(worlds[seed - 1], q, seed).post_count();
  };
  bool monotone = true;
  std::string detail_text;
  for (double q : {0.01, 0.1, 1.0, 10.0}) {
    const double lo = mean_posts_over_seeds(posts, q, seeds);
    const double hi = mean_posts_over_seeds(posts, 4.0 * q, seeds);
    monotone = monotone && hi <= lo;
    detail_text += "q=" + fixed(q, 2) + ": " + fixed(lo, 5) + " >= " + fixed(hi, 5) + "; ";
  }
  const std::vector<std::uint64_t> tune_seeds(c.seeds.begin(), c.seeds.end());
  TuneOptions options;
  options.tolerance = 0.1;
  const auto tuned = tune_q(100.0, posts, tune_seeds, options);
  const double check = mean_posts_over_seeds(posts, tuned.q, tune_seeds);
  const bool hit = tuned.converged && std::abs(check - 100.0) <= 10.0;
  detail_text += "tune_q(100) -> q=" + fixed(tuned.q, 5) + ", mean posts " + fixed(check, 5) + " after " +
                 std::to_string(tuned.evaluations) + " evaluations";
  return {monotone && hit, detail_text};
}

struct PolicyMeans {
  double position = 0.0;
  double top = 0.0;
  double posts = 0.0;
};

std::map<std::string, PolicyMeans> means_by_policy(const CellResult& cell) {
  std::map<std::string, PolicyMeans> out;
  std::map<std::string, int> n;
  for (const auto& r : cell.reports) {
    auto& m = out[r.policy];
    m.position += r.position_over_time;
    m.top += r.time_at_top;
    m.posts += static_cast<double>(r.posts);
    ++n[r.policy];
  }
  for (auto& [k, m] : out) {
    m.position /= n[k];
    m.top /= n[k];
    m.posts /= n[k];
  }
  return out;
}

// 7. RedQueen against the clairvoyant oracle on the one-follower Hawkes setup.
Outcome fig2_direction() {
  ExperimentConfig c = hawkes_config();
  c.policies = {Policy::redqueen, Policy::oracle};
  c.budgets = {50.0, 100.0, 200.0, 290.0};
  double feed_events = 0.0;
  for (auto seed : c.seeds) feed_events += static_cast<double>(make_hawkes_world(c, seed).feeds[0].size());
  feed_events /= static_cast<double>(c.seeds.size());
  const auto result = run_one_follower_hawkes(c);
  bool pass = true;
  std::string text = "mean feed events " + fixed(feed_events, 5) + "; ";
  for (const auto& cell : result.cells) {
    const auto m = means_by_policy(cell);
    const double pos_ratio = m.at("redqueen").position / m.at("oracle").position;
    const double top_ratio = m.at("redqueen").top / m.at("oracle").top;
    const bool under_30 = m.at("redqueen").posts < 0.3 * feed_events;
    pass = pass && under_30 && pos_ratio <= 3.5 && top_ratio >= 0.35;
    text += cell.run + ": position x" + fixed(pos_ratio, 3) + ", top x" + fixed(top_ratio, 3) + "; ";
  }
  return {pass, text};
}

// 8. Follower-averaged position is flat in the number of followers.
Outcome fig3_flatness() {
  ExperimentConfig c;
  c.scenario = Scenario::multi_follower_sinusoid;
  c.policies = {Policy::redqueen};
  c.budgets = {30.0};
  c.tolerance = 0.05;
  const auto result = run_multi_follower_sinusoid(c);
  std::vector<double> positions;
  std::string text;
  for (const auto& cell : result.cells) {
    const auto m = means_by_policy(cell).at("redqueen");
    positions.push_back(m.position);
    text += fixed(m.position, 4) + " ";
  }
  const auto [lo, hi] = std::minmax_element(positions.begin(), positions.end());
  const double spread = (*hi - *lo) / *lo;
  return {spread < 0.25, "position by followers 1..10: " + text + "; spread " + fixed(spread, 3)};
}

// 9. Zero-significance weekend buckets silence RedQueen.
Outcome weekend_silence() {
  const Manifest manifest = load_manifest(fs::path(REDQUEEN_DATA_DIR) / "weekend" / "manifest.txt");
  IdRegistry ids;
  const EventStream events = load_events(manifest.events, ids);
  const Network network = load_network(manifest.network, ids);
  ReplayDataset data = build_replay_dataset(events, network, *ids.find("star"), manifest.window());
  attach_significance(data, events, *manifest.significance, manifest.laplace, manifest.calendar());
  const auto& profile = data.significance->front();
  const bool weekend_zero = profile.values[5] == 0.0 && profile.values[6] == 0.0;

  ExperimentConfig c;
  const auto count_weekend_posts = [&](bool use_significance, double& mean_posts) {
    const World world = make_replay_world(data, c.offline_segments, manifest.calendar(), use_significance);
    const auto posts = [&](double q, std::uint64_t seed) { return detail::run_redqueen(world, q, seed).post_count(); };
    const std::vector<std::uint64_t> seeds(c.seeds.begin(), c.seeds.end());
    const auto tuned = tune_q(static_cast<double>(data.true_posts.size()), posts, seeds);
    std::size_t weekend = 0, total = 0;
    for (auto seed : seeds) {
      const auto traj = detail::run_redqueen(world, tuned.q, seed);
      total += traj.post_count();
      for (const auto& p : traj.own_posts) {
        if (bucket_of(p.time, Granularity::weekday, manifest.calendar()) >= 5) ++weekend;
      }
    }
    mean_posts = static_cast<double>(total) / static_cast<double>(seeds.size());
    return weekend;
  };
  double with_posts = 0.0, without_posts = 0.0;
  const std::size_t with_sig = count_weekend_posts(true, with_posts);
  const std::size_t without_sig = count_weekend_posts(false, without_posts);
  return {weekend_zero && with_sig == 0 && without_sig > 0 && with_posts > 0.0,
          "weekend posts with significance " + std::to_string(with_sig) + " (mean posts " + fixed(with_posts, 4) +
              "), without " + std::to_string(without_sig) + " (mean posts " + fixed(without_posts, 4) + ")"};
}

// Brute force over every 3-post schedule on a small clustered example: the
// burst is strictly worse than the best spread schedule.
bool clustered_is_suboptimal(double& clustered_cost, double& best_cost) {
  std::vector<Event> feed;
  for (int k = 1; k <= 12; ++k) feed.push_back({static_cast<double>(k), SourceId{1}});
  const EventStream f = EventStream::from_sorted(feed);
  const Horizon h{0.0, 13.0};
  auto cost = [&](std::vector<Time> posts) {
    std::vector<Event> e;
    for (Time t : posts) e.push_back({t, SourceId{0}});
    PlaybackController c(EventStream::from_sorted(e));
    return position_over_time(simulate({FeedSource::recorded(f)}, c, h).rank_paths[0]);
  };
  clustered_cost = cost({1.0, 1.1, 1.2});
  best_cost = kInfinity;
  for (int a = 1; a <= 12; ++a)
    for (int b = a + 1; b <= 12; ++b)
      for (int d = b + 1; d <= 12; ++d) best_cost = std::min(best_cost, cost({double(a), double(b), double(d)}));
  return best_cost < clustered_cost;
}

// 10. True-posts playback normalizes to 1; RedQueen beats clustered true posts.
Outcome replay_normalization() {
  double clustered = 0.0, best = 0.0;
  const bool proof = clustered_is_suboptimal(clustered, best);

  ExperimentConfig c;
  c.scenario = Scenario::replay;
  c.manifest = fs::path(REDQUEEN_DATA_DIR) / "fixture" / "manifest.txt";
  c.policies = {Policy::true_posts, Policy::redqueen};
  const auto reports = run_experiment(c).reports();
  bool exact_one = true;
  std::vector<double> rq;
  for (const auto& r : reports) {
    if (r.policy == "true-posts") {
      exact_one = exact_one && r.normalized_position == 1.0 && r.normalized_time_at_top == 1.0;
    } else {
      rq.push_back(*r.normalized_position);
    }
  }
  const Summary s = summarize(rq);
  return {proof && exact_one && !rq.empty() && s.mean < 1.0 && s.median < 1.0,
          "brute force: clustered " + fixed(clustered, 4) + " > best " + fixed(best, 4) +
              "; true-posts normalized exactly 1: " + (exact_one ? "yes" : "no") +
              "; RedQueen normalized position mean " + fixed(s.mean, 3) + ", median " + fixed(s.median, 3)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// 11. Every CLI scenario is byte-reproducible.
Outcome cli_determinism() {
  const fs::path dir = fs::temp_directory_path() / ("redqueen-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string cli = REDQUEEN_CLI;
  const std::string data = REDQUEEN_DATA_DIR;
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"hawkes", "simulate --scenario one-follower-hawkes --policy redqueen,oracle,uniform,segment-offline "
                 "--seeds 1,2,3 --budget 50,100"},
      {"sinusoid", "simulate --scenario multi-follower-sinusoid --policy redqueen,uniform,segment-offline "
                   "--seeds 1,2 --followers 1,3 --budget 30"},
      {"replay", "replay --manifest " + data + "/fixture/manifest.txt --policy true-posts,redqueen,uniform,"
                 "segment-offline --seeds 1,2,3"},
      {"replay-significance", "replay --manifest " + data + "/weekend/manifest.txt --significance --seeds 1,2"},
  };
  bool pass = true;
  std::string text;
  for (const auto& [name, args] : runs) {
    std::string outputs[2];
    for (int round = 0; round < 2; ++round) {
      const fs::path report = dir / (name + std::to_string(round) + ".csv");
      const fs::path summary = dir / (name + std::to_string(round) + ".summary.csv");
      const std::string cmd = "\"" + cli + "\" " + args + " --out \"" + report.string() + "\" --summary \"" +
                              summary.string() + "\" 2>/dev/null";
      const int status = std::system(cmd.c_str());
      if (status != 0) {
        pass = false;
        text += name + ": exit " + std::to_string(status) + "; ";
      }
      outputs[round] = slurp(report) + slurp(summary);
    }
    const bool same = !outputs[0].empty() && outputs[0] == outputs[1];
    pass = pass && same;
    text += name + (same ? " identical (" + std::to_string(outputs[0].size()) + " bytes); " : " DIFFERS; ");
  }
  for (const auto& [name, args] :
       std::vector<std::pair<std::string, std::string>>{{"tune-q", "tune-q --target 80 --seeds 1,2,3"},
                                                        {"significance", "estimate-significance --events " + data +
                                                                             "/weekend/events.jsonl --granularity "
                                                                             "weekday-hour --epoch 1246838400"}}) {
    std::string outputs[2];
    for (int round = 0; round < 2; ++round) {
      const fs::path out = dir / (name + std::to_string(round) + ".txt");
      const std::string cmd = "\"" + cli + "\" " + args + " > \"" + out.string() + "\" 2>/dev/null";
      if (std::system(cmd.c_str()) != 0) {
        pass = false;
        text += name + ": nonzero exit; ";
      }
      outputs[round] = slurp(out);
    }
    const bool same = !outputs[0].empty() && outputs[0] == outputs[1];
    pass = pass && same;
    text += name + (same ? " identical; " : " DIFFERS; ");
  }
  fs::remove_all(dir);
  return {pass, text};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 rank dynamics equivalence", rank_equivalence},
      {"2 Hawkes sampler correctness", hawkes_sampler},
      {"3 intensity decay law", decay_law},
      {"4 first-post distribution", first_post_distribution},
      {"5 oracle DP optimality", oracle_optimality},
      {"6 q monotonicity and tuning", q_monotonicity_and_tuning},
      {"7 one-follower Hawkes vs oracle", fig2_direction},
      {"8 flat in follower count", fig3_flatness},
      {"9 weekend silence with significance", weekend_silence},
      {"10 replay normalization", replay_normalization},
      {"11 CLI determinism", cli_determinism},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "[PASS] " : "[FAIL] ") << name << " (" << fixed(seconds, 3) << " s): "
              << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
