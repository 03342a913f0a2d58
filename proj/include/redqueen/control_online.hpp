#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "redqueen/common.hpp"
#include "redqueen/feed_sim.hpp"
#include "redqueen/parallel.hpp"
#include "redqueen/point_process.hpp"
#include "redqueen/random.hpp"

namespace redqueen {

/// Quadratic-loss trade-off: q weighs posting, s_j(t) weighs follower j's rank.
struct RedQueenParams {
  /// Posting cost. +inf disables posting entirely.
  double q = 1.0;
  /// Per-follower significance schedules; empty means s_j(t) = 1 everywhere.
  std::vector<PiecewiseRate> significance;

  void validate(std::size_t followers) const {
    if (!(q > 0.0)) throw ConfigError("RedQueen q must be > 0");
    if (!significance.empty() && significance.size() != followers) {
      throw ConfigError("RedQueen significance needs one schedule per follower");
    }
  }

  /// s_j(t); zero outside the schedule's domain.
  double significance_at(std::size_t follower, Time t) const {
    if (significance.empty()) return 1.0;
    const auto& s = significance.at(follower);
    if (t < s.domain_start() || t > s.domain_end()) return 0.0;
    return s.at(t);
  }
};

/// u*(t) = sum_j sqrt(s_j(t)/q) r_j(t).
inline double optimal_intensity(const RankState& state, const RedQueenParams& params, Time t) {
  double total = 0.0;
  for (std::size_t j = 0; j < state.follower_count(); ++j) {
    const Rank r = state.rank(j);
    if (r == 0) continue;
    total += std::sqrt(params.significance_at(j, t) / params.q) * static_cast<double>(r);
  }
  return total;
}

/// Next posting time and the state that justified it.
struct PolicyDecision {
  Time post_time = kInfinity;     // +inf: no post before the feed ran out
  std::vector<Rank> ranks;        // rank snapshot when the decision was committed
  Time clock_origin = kInfinity;  // feed event (or window start) that spawned the winning clock
  double delta = kInfinity;       // sampled waiting time of the winning clock
  std::size_t feed_events_consumed = 0;

  bool posts() const noexcept { return post_time < kInfinity; }
};

/// Superposed exponential clocks realizing u*(t).
///
/// Every rank increment of follower j starts a clock of rate sqrt(s_j/q); the
/// next post is the minimum over live clocks. Only that minimum is kept. A
/// batch of k simultaneous clocks is sampled as one clock of rate k*sqrt(s_j/q).
class RedQueenClock {
 public:
  explicit RedQueenClock(RedQueenParams params) : params_(std::move(params)) {}

  const RedQueenParams& params() const noexcept { return params_; }
  Time candidate() const noexcept { return candidate_; }
  Time clock_origin() const noexcept { return origin_; }
  double delta() const noexcept { return candidate_ - origin_; }

  /// Discards pending clocks and spawns one per existing rank unit at as_of.
  void reset(const RankState& state, Rng& rng) {
    params_.validate(state.follower_count());
    clear();
    for (std::size_t j = 0; j < state.follower_count(); ++j) {
      if (state.rank(j) > 0) spawn(state.as_of(), j, state.rank(j), rng);
    }
  }

  void spawn(Time start, std::size_t follower, Rank multiplicity, Rng& rng) {
    const Time t = first_arrival(start, follower, static_cast<double>(multiplicity), rng);
    if (t < candidate_) {
      candidate_ = t;
      origin_ = start;
    }
  }

  void clear() noexcept {
    candidate_ = kInfinity;
    origin_ = kInfinity;
  }

 private:
  // First arrival of a Poisson process with rate k*sqrt(s_j(t)/q) from `start`.
  // Significance is piecewise constant, so each piece is sampled exactly; the
  // proposal rate per piece equals the piece's own rate and every proposal
  // inside the piece is accepted.
  Time first_arrival(Time start, std::size_t follower, double multiplicity, Rng& rng) const {
    if (params_.significance.empty()) {
      return start + rng.exponential(multiplicity * std::sqrt(1.0 / params_.q));
    }
    const PiecewiseRate& s = params_.significance.at(follower);
    Time t = std::max(start, s.domain_start());
    while (t < s.domain_end()) {
      const Time piece_end = s.next_knot(t);
      const double rate = multiplicity * std::sqrt(s.at(t) / params_.q);
      const Time arrival = t + rng.exponential(rate);
      if (arrival < piece_end) return arrival;
      t = piece_end;
    }
    return kInfinity;
  }

  RedQueenParams params_;
  Time candidate_ = kInfinity;
  Time origin_ = kInfinity;
};

/// The RedQueen policy as an online controller for the simulation loop.
class RedQueenController final : public Controller {
 public:
  RedQueenController(RedQueenParams params, Rng rng) : clock_(std::move(params)), rng_(rng) {}

  void start(const RankState& state) override { clock_.reset(state, rng_); }
  Time next_post() const override { return clock_.candidate(); }
  void observe_feed(const FeedArrival& arrival, const RankState&) override {
    clock_.spawn(arrival.time, arrival.follower, 1, rng_);
  }
  void observe_own_post(Time, const RankState&) override { clock_.clear(); }

  const RedQueenClock& clock() const noexcept { return clock_; }

 private:
  RedQueenClock clock_;
  Rng rng_;
};

/// Online source of upcoming feed arrivals; peeking reveals nothing to the
/// policy beyond "does the next event happen before the pending post".
template <class C>
concept FeedCursor = requires(C c) {
  { c.peek() } -> std::convertible_to<std::optional<FeedArrival>>;
  c.pop();
};

/// Cursor over recorded per-follower streams, merged in time order.
class RecordedFeedCursor {
 public:
  explicit RecordedFeedCursor(std::vector<EventStream> feeds) : feeds_(std::move(feeds)), pos_(feeds_.size(), 0) {
    for (std::size_t j = 0; j < feeds_.size(); ++j) {
      if (!feeds_[j].empty()) heap_.emplace(feeds_[j][0].time, j);
    }
  }

  std::optional<FeedArrival> peek() const {
    if (heap_.empty()) return std::nullopt;
    return FeedArrival{heap_.top().first, heap_.top().second};
  }

  void pop() {
    const std::size_t j = heap_.top().second;
    heap_.pop();
    if (++pos_[j] < feeds_[j].size()) heap_.emplace(feeds_[j][pos_[j]].time, j);
  }

 private:
  using Head = std::pair<Time, std::size_t>;
  std::vector<EventStream> feeds_;
  std::vector<std::size_t> pos_;
  std::priority_queue<Head, std::vector<Head>, std::greater<>> heap_;
};

/// Cursor over lazily generated feeds.
class LiveFeedCursor {
 public:
  explicit LiveFeedCursor(std::vector<FeedSource> feeds) : feeds_(std::move(feeds)) {
    for (std::size_t j = 0; j < feeds_.size(); ++j) pull(j);
  }

  std::optional<FeedArrival> peek() const {
    if (heap_.empty()) return std::nullopt;
    return FeedArrival{heap_.top().first, heap_.top().second};
  }

  void pop() {
    const std::size_t j = heap_.top().second;
    heap_.pop();
    pull(j);
  }

 private:
  void pull(std::size_t j) {
    if (auto e = feeds_[j].next()) heap_.emplace(e->time, j);
  }

  using Head = std::pair<Time, std::size_t>;
  std::vector<FeedSource> feeds_;
  std::priority_queue<Head, std::vector<Head>, std::greater<>> heap_;
};

/// RedQueen sampling loop for many followers: starting at `state`, consume
/// feed arrivals while they precede the pending candidate, spawning one clock
/// per arrival; commit the candidate once the next arrival is not earlier.
template <FeedCursor Cursor>
PolicyDecision next_post_time(Cursor& feed, const RedQueenParams& params, RankState state, Rng& rng) {
  RedQueenClock clock(params);
  clock.reset(state, rng);
  PolicyDecision decision;
  while (true) {
    const std::optional<FeedArrival> arrival = feed.peek();
    if (!arrival || !(arrival->time < clock.candidate())) break;
    feed.pop();
    state.apply(*arrival);
    clock.spawn(arrival->time, arrival->follower, 1, rng);
    ++decision.feed_events_consumed;
  }
  decision.post_time = clock.candidate();
  decision.ranks.assign(state.ranks().begin(), state.ranks().end());
  decision.clock_origin = clock.clock_origin();
  decision.delta = decision.posts() ? clock.delta() : kInfinity;
  return decision;
}

struct TuneOptions {
  double tolerance = 0.1;
  std::size_t max_iterations = 60;
  double initial_q = 1.0;
  double bracket_factor = 4.0;
  double min_q = 1e-12;
  double max_q = 1e12;
};

struct TuneResult {
  double q = 1.0;
  double mean_posts = 0.0;
  bool converged = false;
  double lower = 0.0;  // q bracket: posts(lower) >= target >= posts(upper)
  double upper = 0.0;
  std::size_t evaluations = 0;
  std::string diagnostic;
};

/// Finds q whose mean post count is within tolerance*target of target.
///
/// Mean posts decrease with q, so the search brackets q multiplicatively and
/// then bisects on log q. `mean_posts(q)` must be deterministic for a given q
/// (fixed seeds), which keeps the search reproducible.
inline TuneResult tune_q(double target, const std::function<double(double)>& mean_posts, TuneOptions options = {}) {
  if (!(target >= 1.0)) throw ConfigError("tune_q: target posts must be >= 1");
  if (!(options.tolerance >= 0.0)) throw ConfigError("tune_q: tolerance must be >= 0");

  TuneResult result;
  double best_gap = kInfinity;
  auto evaluate = [&](double q) {
    const double posts = mean_posts(q);
    ++result.evaluations;
    const double gap = std::abs(posts - target);
    if (gap < best_gap) {
      best_gap = gap;
      result.q = q;
      result.mean_posts = posts;
    }
    return posts;
  };
  auto hit = [&](double posts) { return std::abs(posts - target) <= options.tolerance * target; };
  auto budget_left = [&] { return result.evaluations < options.max_iterations; };

  double q = options.initial_q;
  double posts = evaluate(q);
  if (hit(posts)) {
    result.converged = true;
    result.lower = result.upper = q;
    return result;
  }

  double lower = 0.0;
  double upper = 0.0;
  if (posts > target) {
    lower = q;
    while (true) {
      if (q >= options.max_q || !budget_left()) {
        result.lower = lower;
        result.upper = q;
        result.diagnostic = "search stopped at upper q bound " + std::to_string(q) +
                            " with mean posts still above target";
        return result;
      }
      q = std::min(q * options.bracket_factor, options.max_q);
      posts = evaluate(q);
      if (hit(posts)) {
        result.converged = true;
        result.lower = result.upper = q;
        return result;
      }
      if (posts < target) break;
      lower = q;
    }
    upper = q;
  } else {
    upper = q;
    while (true) {
      if (q <= options.min_q || !budget_left()) {
        result.lower = q;
        result.upper = upper;
        result.diagnostic = "search terminated at lower q bound " + std::to_string(q) +
                            ": target posts not reachable";
        return result;
      }
      q = std::max(q / options.bracket_factor, options.min_q);
      posts = evaluate(q);
      if (hit(posts)) {
        result.converged = true;
        result.lower = result.upper = q;
        return result;
      }
      if (posts > target) break;
      upper = q;
    }
    lower = q;
  }

  while (budget_left()) {
    const double mid = std::sqrt(lower * upper);
    posts = evaluate(mid);
    if (hit(posts)) {
      result.converged = true;
      result.lower = result.upper = mid;
      return result;
    }
    if (posts > target) {
      lower = mid;
    } else {
      upper = mid;
    }
  }
  result.lower = lower;
  result.upper = upper;
  result.diagnostic = "no q within tolerance after " + std::to_string(result.evaluations) +
                      " evaluations; best bracket [" + std::to_string(lower) + ", " + std::to_string(upper) + "]";
  return result;
}

/// Averages `posts(q, seed)` over seeds, one independent run per seed.
inline double mean_posts_over_seeds(const std::function<std::size_t(double, std::uint64_t)>& posts, double q,
                                    std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ConfigError("mean_posts_over_seeds: no seeds");
  const auto counts = parallel_map(seeds.size(), [&](std::size_t i) { return posts(q, seeds[i]); });
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  return total / static_cast<double>(seeds.size());
}

inline TuneResult tune_q(double target, const std::function<std::size_t(double, std::uint64_t)>& posts,
                         std::span<const std::uint64_t> seeds, TuneOptions options = {}) {
  return tune_q(
      target, [&](double q) { return mean_posts_over_seeds(posts, q, seeds); }, options);
}

}  // namespace redqueen
