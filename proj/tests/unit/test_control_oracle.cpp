#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "redqueen/control_oracle.hpp"
#include "redqueen/feed_sim.hpp"
#include "redqueen/metrics.hpp"
#include "redqueen/random.hpp"

namespace redqueen {
namespace {

OracleInstance random_instance(Rng& rng, std::size_t stages) {
  OracleInstance inst;
  inst.initial_rank = rng.next_u64() % 4;
  for (std::size_t k = 0; k < stages; ++k) inst.widths.push_back(0.1 + 1.9 * rng.uniform());
  inst.q = std::exp(std::log(0.01) + rng.uniform() * (std::log(100.0) - std::log(0.01)));
  inst.significance = 0.5 + rng.uniform();
  return inst;
}

// Expected values below come from exhaustive enumeration done outside the library.
TEST(OracleSchedule, SmallHandInstances) {
  const auto a = oracle_schedule(OracleInstance{0, {1.0, 2.0, 0.5}, 1.0, 1.0});
  EXPECT_EQ(a.decisions, (std::vector<std::uint8_t>{0, 1, 1}));
  EXPECT_DOUBLE_EQ(a.cost, 1.5);

  const auto b = oracle_schedule(OracleInstance{2, {0.3, 0.3, 1.5, 0.2}, 3.0, 1.0});
  EXPECT_EQ(b.decisions, (std::vector<std::uint8_t>{1, 0, 1, 0}));
  EXPECT_DOUBLE_EQ(b.cost, 3.75);
}

TEST(OracleSchedule, TopRankStateIsReachable) {
  // Never posting keeps the rank at r0 + k + 1 after stage k; the DP must
  // price that path, so with a huge q the cost is the never-post cost.
  const OracleInstance inst{5, {1.0, 1.0}, 1e9, 1.0};
  const auto s = oracle_schedule(inst);
  EXPECT_EQ(s.post_count(), 0u);
  EXPECT_DOUBLE_EQ(s.cost, 0.5 * 36.0 + 0.5 * 49.0 + 0.5 * 49.0);
}

TEST(OracleSchedule, CostMatchesScheduleCost) {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const auto inst = random_instance(rng, 1 + rng.next_u64() % 40);
    const auto s = oracle_schedule(inst);
    EXPECT_EQ(s.cost, schedule_cost(inst, s.decisions));
  }
}

TEST(OracleSchedule, EqualsBruteForce) {
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    const auto inst = random_instance(rng, 1 + rng.next_u64() % 10);
    EXPECT_EQ(oracle_schedule(inst).cost, brute_force_schedule(inst).cost);
  }
}

TEST(OracleSchedule, ValidatesInput) {
  EXPECT_THROW(oracle_schedule(OracleInstance{0, {}, 1.0, 1.0}), ConfigError);
  EXPECT_THROW(oracle_schedule(OracleInstance{0, {0.0}, 1.0, 1.0}), ConfigError);
  EXPECT_THROW(oracle_schedule(OracleInstance{0, {1.0}, -1.0, 1.0}), ConfigError);
  EXPECT_THROW(brute_force_schedule(OracleInstance{0, std::vector<double>(22, 1.0), 1.0, 1.0}), ConfigError);
}

TEST(MultiFollowerBruteForce, OneFollowerAgreesWithDp) {
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    const auto inst = random_instance(rng, 1 + rng.next_u64() % 8);
    MultiFollowerInstance multi{{inst.initial_rank}, std::vector<std::size_t>(inst.stages(), 0), inst.widths, inst.q,
                                inst.significance};
    EXPECT_NEAR(brute_force_schedule(multi).cost, oracle_schedule(inst).cost, 1e-9);
  }
}

TEST(OracleFeed, ScheduleRealizesItsCostInSimulation) {
  const Horizon h{0.0, 10.0};
  const auto feed = sample_piecewise_poisson(PiecewiseRate::constant(2.0), h, Rng(4), SourceId{1});
  const auto inst = instance_from_feed(feed, h, 0, 2.0);
  const auto schedule = oracle_schedule(inst);
  PlaybackController c(schedule_post_times(schedule, feed, h));
  const auto traj = simulate({FeedSource::recorded(feed)}, c, h);
  EXPECT_EQ(traj.post_count(), schedule.post_count());
  // Rank 0 before the first feed event contributes nothing to either side.
  EXPECT_NEAR(quadratic_cost(traj.rank_paths[0], traj.post_count(), inst.q), schedule.cost, 1e-9);
}

TEST(OracleFeed, EmptyFeedIsRejected) {
  EXPECT_THROW(instance_from_feed(EventStream{}, Horizon{0.0, 1.0}, 0, 1.0), ConfigError);
}

TEST(OracleBudget, HitsRequestedPostCount) {
  Rng rng(9);
  const auto inst = random_instance(rng, 300);
  for (std::size_t posts : {0u, 1u, 10u, 50u, 120u}) {
    const auto b = oracle_for_budget(inst, posts);
    EXPECT_NEAR(static_cast<double>(b.schedule.post_count()), static_cast<double>(posts), 1.0) << posts;
  }
}

}  // namespace
}  // namespace redqueen
