#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "redqueen/common.hpp"
#include "redqueen/point_process.hpp"

namespace redqueen {

/// Revealed single-follower feed discretized at its event times.
///
/// Stage k (k = 0..m) is the k-th feed event; widths[k] is the time from that
/// event to the next one (the last width runs to the horizon end).
struct OracleInstance {
  Rank initial_rank = 0;
  std::vector<double> widths;
  double q = 1.0;
  double significance = 1.0;

  std::size_t stages() const noexcept { return widths.size(); }

  void validate() const {
    if (widths.empty()) throw ConfigError("oracle instance needs at least one interval");
    for (double w : widths) {
      if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("oracle interval widths must be finite and > 0");
    }
    if (!(q >= 0.0) || !std::isfinite(q)) throw ConfigError("oracle q must be finite and >= 0");
    if (!(significance >= 0.0) || !std::isfinite(significance)) {
      throw ConfigError("oracle significance must be finite and >= 0");
    }
  }
};

struct OracleSchedule {
  std::vector<std::uint8_t> decisions;  // u_k in {0, 1}
  double cost = 0.0;                    // J(r0, 0)

  std::size_t post_count() const {
    std::size_t n = 0;
    for (auto u : decisions) n += u;
    return n;
  }
};

/// Clairvoyant posting schedule by backward induction over (rank, stage).
///
/// J(r, m+1) = r^2/2 and J(r, k) = min{ q/2 + J(0, k+1), s w_k (r+1)^2 / 2 + J(r+1, k+1) },
/// where posting right after feed event k resets the rank before the next
/// interval. Ties keep the rank (no post). Reachable ranks at stage k are
/// 0..r0+k, so the work is O(m^2); decisions are kept as one bit per state.
inline OracleSchedule oracle_schedule(const OracleInstance& inst) {
  inst.validate();
  const std::size_t stages = inst.stages();  // m + 1
  const Rank r0 = inst.initial_rank;
  const double half_q = 0.5 * inst.q;

  std::vector<double> next(static_cast<std::size_t>(r0 + stages) + 1);
  for (std::size_t r = 0; r < next.size(); ++r) {
    next[r] = 0.5 * static_cast<double>(r) * static_cast<double>(r);
  }
  std::vector<std::vector<bool>> post(stages);
  std::vector<double> current;
  for (std::size_t k = stages; k-- > 0;) {
    const std::size_t top = static_cast<std::size_t>(r0 + k);
    current.assign(top + 1, 0.0);
    post[k].assign(top + 1, false);
    const double stage_weight = 0.5 * inst.significance * inst.widths[k];
    const double post_value = half_q + next[0];
    for (std::size_t r = 0; r <= top; ++r) {
      const double grown = static_cast<double>(r + 1);
      const double wait_value = stage_weight * (grown * grown) + next[r + 1];
      if (post_value < wait_value) {
        current[r] = post_value;
        post[k][r] = true;
      } else {
        current[r] = wait_value;
      }
    }
    next.swap(current);
  }

  OracleSchedule schedule;
  schedule.cost = next[static_cast<std::size_t>(r0)];
  schedule.decisions.resize(stages);
  std::size_t r = static_cast<std::size_t>(r0);
  for (std::size_t k = 0; k < stages; ++k) {
    const bool u = post[k][r];
    schedule.decisions[k] = u ? 1 : 0;
    r = u ? 0 : r + 1;
  }
  return schedule;
}

/// Objective of a decision vector:
/// sum_k [ s w_k r_{k+1}^2 / 2 + q u_k / 2 ] + r_{m+1}^2 / 2 with r_{k+1} = (r_k + 1)(1 - u_k).
/// Summed from the last stage backwards so the floating-point association
/// matches backward induction.
inline double schedule_cost(const OracleInstance& inst, const std::vector<std::uint8_t>& decisions) {
  inst.validate();
  if (decisions.size() != inst.stages()) throw ConfigError("decision vector length must equal stage count");
  std::vector<Rank> after(decisions.size());
  Rank r = inst.initial_rank;
  for (std::size_t k = 0; k < decisions.size(); ++k) {
    r = decisions[k] ? 0 : r + 1;
    after[k] = r;
  }
  const double last = static_cast<double>(r);
  double total = 0.5 * last * last;
  for (std::size_t k = decisions.size(); k-- > 0;) {
    const double rk = static_cast<double>(after[k]);
    const double stage = decisions[k] ? 0.5 * inst.q : 0.5 * inst.significance * inst.widths[k] * (rk * rk);
    total = stage + total;
  }
  return total;
}

inline constexpr std::size_t kBruteForceMaxStages = 21;  // m <= 20

/// Exhaustive search over all 2^(m+1) decision vectors. Test oracle.
inline OracleSchedule brute_force_schedule(const OracleInstance& inst) {
  inst.validate();
  const std::size_t stages = inst.stages();
  if (stages > kBruteForceMaxStages) {
    throw ConfigError("brute_force_schedule supports m <= 20 (got m = " + std::to_string(stages - 1) + ")");
  }
  OracleSchedule best;
  best.cost = kInfinity;
  std::vector<std::uint8_t> decisions(stages);
  const std::uint64_t combos = std::uint64_t{1} << stages;
  for (std::uint64_t mask = 0; mask < combos; ++mask) {
    for (std::size_t k = 0; k < stages; ++k) decisions[k] = (mask >> k) & 1U;
    const double cost = schedule_cost(inst, decisions);
    if (cost < best.cost) {
      best.cost = cost;
      best.decisions = decisions;
    }
  }
  return best;
}

/// Several followers sharing one posting decision per merged feed event.
struct MultiFollowerInstance {
  std::vector<Rank> initial_ranks;
  std::vector<std::size_t> event_follower;  // follower receiving stage k's event
  std::vector<double> widths;
  double q = 1.0;
  double significance = 1.0;
};

/// Exhaustive multi-follower oracle over the vector of ranks (tiny instances only).
inline OracleSchedule brute_force_schedule(const MultiFollowerInstance& inst) {
  const std::size_t stages = inst.widths.size();
  if (stages == 0 || inst.event_follower.size() != stages) {
    throw ConfigError("multi-follower oracle needs one follower index per interval");
  }
  if (stages > kBruteForceMaxStages) throw ConfigError("multi-follower brute force supports m <= 20");
  for (auto f : inst.event_follower) {
    if (f >= inst.initial_ranks.size()) throw ConfigError("event follower index out of range");
  }
  OracleSchedule best;
  best.cost = kInfinity;
  std::vector<std::uint8_t> decisions(stages);
  std::vector<Rank> ranks;
  const std::uint64_t combos = std::uint64_t{1} << stages;
  for (std::uint64_t mask = 0; mask < combos; ++mask) {
    ranks = inst.initial_ranks;
    double cost = 0.0;
    for (std::size_t k = 0; k < stages; ++k) {
      decisions[k] = (mask >> k) & 1U;
      ++ranks[inst.event_follower[k]];
      if (decisions[k]) {
        std::fill(ranks.begin(), ranks.end(), Rank{0});
        cost += 0.5 * inst.q;
      } else {
        double squares = 0.0;
        for (Rank r : ranks) squares += static_cast<double>(r) * static_cast<double>(r);
        cost += 0.5 * inst.significance * inst.widths[k] * squares;
      }
    }
    for (Rank r : ranks) cost += 0.5 * static_cast<double>(r) * static_cast<double>(r);
    if (cost < best.cost) {
      best.cost = cost;
      best.decisions = decisions;
    }
  }
  return best;
}

/// Builds the oracle instance for a revealed feed on `horizon`. The lead-in
/// interval before the first feed event keeps rank `initial_rank` whatever
/// the schedule does, since posts only happen right after feed events.
inline OracleInstance instance_from_feed(const EventStream& feed, Horizon horizon, Rank initial_rank, double q,
                                         double significance = 1.0) {
  const EventStream inside = feed.window(horizon);
  if (inside.empty()) throw ConfigError("oracle needs at least one feed event inside the horizon");
  OracleInstance inst;
  inst.initial_rank = initial_rank;
  inst.q = q;
  inst.significance = significance;
  inst.widths.reserve(inside.size());
  for (std::size_t k = 0; k < inside.size(); ++k) {
    const Time next = k + 1 < inside.size() ? inside[k + 1].time : horizon.end;
    inst.widths.push_back(next - inside[k].time);
  }
  // A feed event exactly at the horizon end leaves a zero-width last interval.
  if (!(inst.widths.back() > 0.0)) inst.widths.back() = std::numeric_limits<double>::denorm_min();
  return inst;
}

/// Post times of a schedule: right after the feed events where u_k = 1.
inline EventStream schedule_post_times(const OracleSchedule& schedule, const EventStream& feed, Horizon horizon,
                                       SourceId source = SourceId{0}) {
  const EventStream inside = feed.window(horizon);
  if (schedule.decisions.size() != inside.size()) throw ConfigError("schedule does not match the feed");
  EventStream posts;
  for (std::size_t k = 0; k < inside.size(); ++k) {
    if (schedule.decisions[k]) posts.push_back(Event{inside[k].time, source});
  }
  return posts;
}

struct BudgetedOracle {
  OracleSchedule schedule;
  double q = 0.0;
};

/// Searches q (bisection on log q) for the schedule whose post count is
/// closest to `posts`, preferring not to exceed it.
inline BudgetedOracle oracle_for_budget(OracleInstance inst, std::size_t posts, std::size_t max_iterations = 80) {
  inst.validate();
  auto run = [&](double q) {
    inst.q = q;
    return oracle_schedule(inst);
  };
  auto better = [&](std::size_t candidate, std::size_t incumbent) {
    const auto dist = [&](std::size_t n) { return n > posts ? n - posts : posts - n; };
    if (dist(candidate) != dist(incumbent)) return dist(candidate) < dist(incumbent);
    return candidate <= posts && incumbent > posts;
  };

  double lower = 1e-12;  // many posts
  double upper = 1e12;   // few posts
  BudgetedOracle best{run(1.0), 1.0};
  for (std::size_t i = 0; i < max_iterations; ++i) {
    const double mid = std::sqrt(lower * upper);
    OracleSchedule s = run(mid);
    const std::size_t n = s.post_count();
    if (better(n, best.schedule.post_count())) best = {std::move(s), mid};
    if (n == posts) break;
    if (n > posts) {
      lower = mid;
    } else {
      upper = mid;
    }
    if (upper / lower < 1.0 + 1e-12) break;
  }
  return best;
}

}  // namespace redqueen
