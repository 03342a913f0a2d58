#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "redqueen/common.hpp"
#include "redqueen/point_process.hpp"

namespace redqueen {

/// Follow graph: an edge (b, f) means f follows b and receives b's stories.
/// A user can be both broadcaster and follower.
class Network {
 public:
  /// Returns false when the edge already existed.
  bool add_edge(SourceId broadcaster, SourceId follower) {
    const bool inserted = followers_[broadcaster].insert(follower).second;
    followees_[follower].insert(broadcaster);
    if (inserted) ++edges_;
    return inserted;
  }

  std::size_t edge_count() const noexcept { return edges_; }
  bool empty() const noexcept { return edges_ == 0; }

  bool contains(SourceId user) const { return followers_.contains(user) || followees_.contains(user); }
  bool has_edge(SourceId broadcaster, SourceId follower) const {
    const auto it = followers_.find(broadcaster);
    return it != followers_.end() && it->second.contains(follower);
  }

  std::vector<SourceId> followers_of(SourceId broadcaster) const { return lookup(followers_, broadcaster); }
  std::vector<SourceId> followees_of(SourceId follower) const { return lookup(followees_, follower); }

  std::size_t followee_count(SourceId follower) const {
    const auto it = followees_.find(follower);
    return it == followees_.end() ? 0 : it->second.size();
  }

 private:
  using Adjacency = std::map<SourceId, std::set<SourceId>>;

  static std::vector<SourceId> lookup(const Adjacency& adj, SourceId key) {
    const auto it = adj.find(key);
    if (it == adj.end()) return {};
    return {it->second.begin(), it->second.end()};
  }

  Adjacency followers_;
  Adjacency followees_;
  std::size_t edges_ = 0;
};

/// A story from another broadcaster lands in one follower's feed.
struct FeedArrival {
  Time time = 0.0;
  std::size_t follower = 0;
};

/// The controlled broadcaster posts; every follower's rank resets to 0.
struct OwnPost {
  Time time = 0.0;
};

using RankEvent = std::variant<FeedArrival, OwnPost>;

inline Time event_time(const RankEvent& e) {
  return std::visit([](const auto& x) { return x.time; }, e);
}

/// Ranks r_j(t) of the controlled broadcaster's latest story in each follower feed.
class RankState {
 public:
  RankState(std::size_t followers, Time start, Rank initial_rank = 0)
      : ranks_(followers, initial_rank), as_of_(start) {}

  RankState(std::vector<Rank> ranks, Time start, std::optional<Time> last_own_post = std::nullopt)
      : ranks_(std::move(ranks)), last_own_post_(last_own_post), as_of_(start) {}

  std::span<const Rank> ranks() const noexcept { return ranks_; }
  Rank rank(std::size_t follower) const { return ranks_.at(follower); }
  std::size_t follower_count() const noexcept { return ranks_.size(); }
  std::optional<Time> last_own_post() const noexcept { return last_own_post_; }
  Time as_of() const noexcept { return as_of_; }

  bool all_zero() const {
    return std::all_of(ranks_.begin(), ranks_.end(), [](Rank r) { return r == 0; });
  }

  void apply(const FeedArrival& e) {
    advance(e.time);
    ++ranks_.at(e.follower);
  }

  void apply(const OwnPost& e) {
    advance(e.time);
    std::fill(ranks_.begin(), ranks_.end(), Rank{0});
    last_own_post_ = e.time;
  }

  void apply(const RankEvent& e) {
    std::visit([this](const auto& x) { apply(x); }, e);
  }

  friend bool operator==(const RankState&, const RankState&) = default;

 private:
  void advance(Time t) {
    if (t < as_of_) throw OrderingError("rank event precedes current state");
    as_of_ = t;
  }

  std::vector<Rank> ranks_;
  std::optional<Time> last_own_post_;
  Time as_of_;
};

/// One step of dr = -r dN + dM.
inline RankState rank_step(RankState state, const RankEvent& event) {
  state.apply(event);
  return state;
}

/// r(t) = M(t) - M(tau(t)): feed events in (last own post <= t, t]. Before the
/// first own post, counts from the stream start on top of `initial_rank`.
inline Rank rank_from_history(const EventStream& own_posts, const EventStream& feed, Time t,
                              Rank initial_rank = 0) {
  const std::size_t posted = own_posts.count_until(t);
  if (posted == 0) return initial_rank + feed.count_until(t);
  const Time tau = own_posts[posted - 1].time;
  return feed.count_in(tau, t);
}

struct RankChange {
  Time time = 0.0;
  Rank rank = 0;

  friend bool operator==(const RankChange&, const RankChange&) = default;
};

/// Right-continuous step function stored as change-points.
class RankPath {
 public:
  RankPath(Time start, Rank initial) : changes_{{start, initial}}, end_(start) {}

  /// Several changes at one instant collapse to the last value.
  void record(Time t, Rank r) {
    if (t < changes_.back().time) throw OrderingError("rank path change out of order");
    if (t == changes_.back().time) {
      changes_.back().rank = r;
      if (changes_.size() > 1 && changes_[changes_.size() - 2].rank == r) changes_.pop_back();
    } else if (r != changes_.back().rank) {
      changes_.push_back({t, r});
    }
    end_ = std::max(end_, t);
  }

  void close(Time end) {
    if (end < changes_.back().time) throw OrderingError("rank path closed before its last change");
    end_ = end;
  }

  Rank at(Time t) const {
    const auto it = std::upper_bound(changes_.begin(), changes_.end(), t,
                                     [](Time value, const RankChange& c) { return value < c.time; });
    if (it == changes_.begin()) throw OrderingError("rank path queried before its start");
    return std::prev(it)->rank;
  }

  Time start() const noexcept { return changes_.front().time; }
  Time end() const noexcept { return end_; }
  std::span<const RankChange> changes() const noexcept { return changes_; }

  /// Rebuilds a path from stored change-points (used by deserialization).
  static RankPath from_changes(std::vector<RankChange> changes, Time end) {
    if (changes.empty()) throw ConfigError("rank path needs at least one change-point");
    RankPath path(changes.front().time, changes.front().rank);
    for (std::size_t i = 1; i < changes.size(); ++i) {
      if (!(changes[i].time > changes[i - 1].time)) throw OrderingError("rank path change-points must increase");
    }
    path.changes_ = std::move(changes);
    path.close(end);
    return path;
  }

  friend bool operator==(const RankPath&, const RankPath&) = default;

 private:
  std::vector<RankChange> changes_;
  Time end_;
};

struct SimulationTrajectory {
  Horizon horizon;
  EventStream own_posts;
  std::vector<EventStream> feeds;   // per follower, excludes own posts
  std::vector<RankPath> rank_paths;  // per follower
  std::size_t post_feed_ties = 0;    // posts scheduled exactly at a feed event time

  std::size_t follower_count() const noexcept { return feeds.size(); }
  std::size_t post_count() const noexcept { return own_posts.size(); }

  friend bool operator==(const SimulationTrajectory&, const SimulationTrajectory&) = default;
};

/// Online posting policy driven by the simulation loop. A controller only
/// learns about events once the loop reaches their time.
class Controller {
 public:
  virtual ~Controller() = default;

  virtual void start(const RankState& state) = 0;
  /// Earliest time the controller intends to post, +inf when none.
  virtual Time next_post() const = 0;
  virtual void observe_feed(const FeedArrival& arrival, const RankState& after) = 0;
  virtual void observe_own_post(Time t, const RankState& after) = 0;
};

/// Replays a precomputed posting schedule.
class PlaybackController final : public Controller {
 public:
  explicit PlaybackController(EventStream posts) : posts_(std::move(posts)) {}

  void start(const RankState& state) override {
    next_ = posts_.count_until(state.as_of());
    // Posts exactly at the start instant are still honored.
    while (next_ > 0 && posts_[next_ - 1].time == state.as_of()) --next_;
  }
  Time next_post() const override { return next_ < posts_.size() ? posts_[next_].time : kInfinity; }
  void observe_feed(const FeedArrival&, const RankState&) override {}
  void observe_own_post(Time, const RankState&) override { ++next_; }

 private:
  EventStream posts_;
  std::size_t next_ = 0;
};

/// Pull-based source of one follower's feed events.
class FeedSource {
 public:
  using Generator = std::function<std::optional<Event>()>;

  explicit FeedSource(Generator generator) : generator_(std::move(generator)) {}

  static FeedSource recorded(EventStream stream) {
    auto shared = std::make_shared<EventStream>(std::move(stream));
    return FeedSource([shared, i = std::size_t{0}]() mutable -> std::optional<Event> {
      if (i >= shared->size()) return std::nullopt;
      return (*shared)[i++];
    });
  }

  static FeedSource hawkes(HawkesParams params, Horizon horizon, Rng rng, SourceId source = SourceId{0}) {
    auto sampler = std::make_shared<HawkesSampler>(std::move(params), horizon, rng, source);
    return FeedSource([sampler] { return sampler->next(); });
  }

  static FeedSource poisson(PiecewiseRate rate, Horizon horizon, Rng rng, SourceId source = SourceId{0}) {
    auto sampler = std::make_shared<PiecewisePoissonSampler>(std::move(rate), horizon, rng, source);
    return FeedSource([sampler] { return sampler->next(); });
  }

  std::optional<Event> next() { return generator_(); }

 private:
  Generator generator_;
};

struct SimulationOptions {
  Rank initial_rank = 0;
};

/// Discrete-event loop merging lazily generated feeds with controller posts.
///
/// A post and a feed event at the same instant are ordered feed-first, which
/// matches rank_from_history (feed events at tau are not counted after tau).
inline SimulationTrajectory simulate(std::vector<FeedSource> feeds, Controller& controller, Horizon horizon,
                                     SimulationOptions options = {}) {
  const std::size_t n = feeds.size();
  SimulationTrajectory traj;
  traj.horizon = horizon;
  traj.feeds.resize(n);
  traj.rank_paths.assign(n, RankPath(horizon.start, options.initial_rank));

  RankState state(n, horizon.start, options.initial_rank);

  using Pending = std::pair<Time, std::size_t>;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
  std::vector<std::optional<Event>> head(n);
  auto pull = [&](std::size_t j) {
    head[j] = feeds[j].next();
    while (head[j] && !(head[j]->time > horizon.start)) head[j] = feeds[j].next();
    if (head[j] && head[j]->time <= horizon.end) queue.emplace(head[j]->time, j);
  };
  for (std::size_t j = 0; j < n; ++j) pull(j);

  controller.start(state);
  while (true) {
    const Time feed_time = queue.empty() ? kInfinity : queue.top().first;
    const Time post_time = controller.next_post();
    if (post_time < state.as_of()) throw OrderingError("controller proposed a post time in the past");

    if (post_time < feed_time && post_time <= horizon.end) {
      state.apply(OwnPost{post_time});
      traj.own_posts.push_back(Event{post_time, SourceId{0}});
      for (auto& path : traj.rank_paths) path.record(post_time, 0);
      controller.observe_own_post(post_time, state);
      continue;
    }
    if (queue.empty()) break;

    const std::size_t j = queue.top().second;
    queue.pop();
    const Event e = *head[j];
    if (post_time == e.time) ++traj.post_feed_ties;
    const FeedArrival arrival{e.time, j};
    state.apply(arrival);
    traj.feeds[j].push_back(e);
    traj.rank_paths[j].record(e.time, state.rank(j));
    controller.observe_feed(arrival, state);
    pull(j);
  }
  for (auto& path : traj.rank_paths) path.close(horizon.end);
  return traj;
}

}  // namespace redqueen
