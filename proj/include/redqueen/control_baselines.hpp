#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "redqueen/common.hpp"
#include "redqueen/point_process.hpp"
#include "redqueen/random.hpp"

namespace redqueen {

struct BudgetPolicyParams {
  double budget = 0.0;  // expected number of posts over the horizon
  Horizon horizon;

  void validate() const {
    if (!(budget >= 0.0) || !std::isfinite(budget)) throw ConfigError("budget must be finite and >= 0");
    if (!(horizon.end > horizon.start)) throw ConfigError("budget horizon must be nonempty");
  }
};

/// Homogeneous Poisson posting at rate budget / horizon length.
inline EventStream uniform_poisson_poster(const BudgetPolicyParams& params, Rng rng, SourceId source = SourceId{0}) {
  params.validate();
  if (params.budget == 0.0) return {};
  const double rate = params.budget / params.horizon.length();
  return sample_piecewise_poisson(PiecewiseRate::constant(rate), params.horizon, rng, source);
}

/// The broadcaster's recorded posts, unchanged. Serves as the normalization reference.
inline EventStream true_posts_playback(const EventStream& recorded) { return recorded; }

/// Integral over [a, b] of the expected rank base + Lambda(a, t) for a feed
/// with piecewise-constant rate, where Lambda(a, t) is the expected count in (a, t].
inline double expected_rank_integral(const PiecewiseRate& rate, Time a, Time b, double base) {
  double total = 0.0;
  double accumulated = base;
  Time t = a;
  while (t < b) {
    const Time stop = std::min(b, rate.next_knot(t));
    const double len = stop - t;
    const double lambda = rate.at(t);
    total += accumulated * len + 0.5 * lambda * len * len;
    accumulated += lambda * len;
    t = stop;
  }
  return total;
}

/// Follower-averaged expected position over the horizon for fixed post times
/// under the given feed rates.
inline double expected_position(std::span<const PiecewiseRate> follower_rates, std::span<const Time> posts,
                                Horizon horizon, Rank initial_rank = 0) {
  if (follower_rates.empty()) throw ConfigError("expected_position: no followers");
  double total = 0.0;
  for (const auto& rate : follower_rates) {
    Time from = horizon.start;
    double base = static_cast<double>(initial_rank);
    for (Time p : posts) {
      total += expected_rank_integral(rate, from, p, base);
      from = p;
      base = 0.0;
    }
    total += expected_rank_integral(rate, from, horizon.end, base);
  }
  return total / static_cast<double>(follower_rates.size());
}

namespace detail {

inline std::vector<Time> segment_knots(std::span<const PiecewiseRate> follower_rates, Horizon horizon) {
  std::vector<Time> knots{horizon.start, horizon.end};
  for (const auto& rate : follower_rates) {
    for (Time k : rate.knots()) {
      if (k > horizon.start && k < horizon.end) knots.push_back(k);
    }
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  return knots;
}

inline std::vector<Time> place_posts(std::span<const Time> knots, std::span<const std::size_t> per_segment) {
  std::vector<Time> posts;
  for (std::size_t s = 0; s < per_segment.size(); ++s) {
    const std::size_t n = per_segment[s];
    const Time start = knots[s];
    const Time step = (knots[s + 1] - start) / static_cast<double>(n + 1);
    for (std::size_t k = 1; k <= n; ++k) posts.push_back(start + step * static_cast<double>(k));
  }
  return posts;
}

}  // namespace detail

/// Offline stand-in for a piecewise-constant planner ("offline-segment
/// baseline"). Allocates round(budget) posts over the segments defined by the
/// followers' rate knots, one post at a time, each to the segment whose extra
/// post lowers expected position the most (earliest segment on ties). A
/// segment with n posts places them at start + k * length / (n + 1), k = 1..n.
inline EventStream segment_offline_poster(std::span<const PiecewiseRate> follower_rates,
                                          const BudgetPolicyParams& params, Rank initial_rank = 0,
                                          SourceId source = SourceId{0}) {
  params.validate();
  if (follower_rates.empty()) throw ConfigError("segment_offline_poster: no follower rates");
  for (const auto& rate : follower_rates) {
    if (!rate.covers(params.horizon)) throw ConfigError("segment_offline_poster: rates do not cover the horizon");
  }
  constexpr double kMaxPosts = 1e6;
  if (params.budget > kMaxPosts) throw ConfigError("segment_offline_poster: budget exceeds representable posts");
  const auto budget = static_cast<std::size_t>(std::llround(params.budget));
  if (budget == 0) return {};

  const std::vector<Time> knots = detail::segment_knots(follower_rates, params.horizon);
  const std::size_t segments = knots.size() - 1;
  std::vector<std::size_t> counts(segments, 0);
  for (std::size_t step = 0; step < budget; ++step) {
    std::size_t best_segment = 0;
    double best_cost = kInfinity;
    for (std::size_t s = 0; s < segments; ++s) {
      ++counts[s];
      const auto posts = detail::place_posts(knots, counts);
      const double cost = expected_position(follower_rates, posts, params.horizon, initial_rank);
      --counts[s];
      if (cost < best_cost) {
        best_cost = cost;
        best_segment = s;
      }
    }
    ++counts[best_segment];
  }

  EventStream out;
  for (Time t : detail::place_posts(knots, counts)) {
    if (!out.empty() && !(t > out.back().time)) {
      throw ConfigError("segment_offline_poster: budget exceeds representable posts in a segment");
    }
    out.push_back(Event{t, source});
  }
  return out;
}

}  // namespace redqueen
