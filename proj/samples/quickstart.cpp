// Simulates RedQueen against a Hawkes feed and compares it with the
// clairvoyant schedule at the same number of posts.

#include <iostream>

#include "redqueen/redqueen.hpp"

int main() {
  using namespace redqueen;

  const Horizon horizon = make_horizon(0.0, 90.0);
  const HawkesParams feed_params(PiecewiseRate::constant(10.0), 1.0, 10.0);
  const EventStream feed = sample_hawkes(feed_params, horizon, Rng(7), SourceId{1});

  RedQueenController policy(RedQueenParams{0.5, {}}, Rng(11));
  const SimulationTrajectory online = simulate({FeedSource::recorded(feed)}, policy, horizon);
  const MetricsReport rq = evaluate(online, "sample", "redqueen", 7);

  const auto oracle = oracle_for_budget(instance_from_feed(feed, horizon, 0, 1.0), rq.posts);
  PlaybackController playback(schedule_post_times(oracle.schedule, feed, horizon));
  const MetricsReport best = evaluate(simulate({FeedSource::recorded(feed)}, playback, horizon), "sample", "oracle", 7);

  std::cout << "feed events: " << feed.size() << '\n';
  for (const auto& r : {rq, best}) {
    std::cout << r.policy << ": posts=" << r.posts << " position_over_time=" << r.position_over_time
              << " time_at_top=" << r.time_at_top << '\n';
  }
}
