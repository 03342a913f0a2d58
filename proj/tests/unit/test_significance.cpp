#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "redqueen/significance.hpp"

namespace redqueen {
namespace {

constexpr std::int64_t kMonday = 1246838400;  // 2009-07-06 00:00 UTC

EventStream at_times(std::vector<Time> times) {
  std::vector<Event> e;
  for (Time t : times) e.push_back({t, SourceId{0}});
  return EventStream::from_sorted(std::move(e));
}

TEST(Calendar, BucketsStartOnMonday) {
  const CalendarMapping cal{kMonday, 0};
  EXPECT_EQ(bucket_of(0.0, Granularity::weekday, cal), 0u);
  EXPECT_EQ(bucket_of(5 * 86400.0 + 1.0, Granularity::weekday, cal), 5u);
  EXPECT_EQ(bucket_of(25 * 3600.0, Granularity::weekday_hour, cal), 25u);
  EXPECT_EQ(bucket_of(0.0, Granularity::weekday_hour, CalendarMapping{kMonday, -3600}), 167u);
  EXPECT_EQ(bucket_of(0.0, Granularity::weekday, CalendarMapping{}), 3u);  // 1970-01-01 was a Thursday
  EXPECT_EQ(bucket_of(-1.0, Granularity::weekday, CalendarMapping{}), 2u);
}

TEST(Granularity, ParsesNames) {
  EXPECT_EQ(parse_granularity("weekday"), Granularity::weekday);
  EXPECT_EQ(parse_granularity("weekday-hour"), Granularity::weekday_hour);
  EXPECT_THROW(parse_granularity("hourly"), ConfigError);
  EXPECT_EQ(bucket_count(Granularity::weekday_hour), 168u);
}

TEST(Estimate, LaplaceSmoothedAndPeakNormalized) {
  const auto p = estimate_significance(at_times({100.0, 200.0, 300.0}), Granularity::weekday, 1.0,
                                       CalendarMapping{kMonday, 0});
  ASSERT_EQ(p.values.size(), 7u);
  EXPECT_DOUBLE_EQ(p.values[0], 1.0);
  for (std::size_t b = 1; b < 7; ++b) EXPECT_DOUBLE_EQ(p.values[b], 0.25);
}

TEST(Estimate, NoSmoothingLeavesUnseenBucketsAtZero) {
  std::vector<Time> times;
  for (int d = 0; d < 5; ++d) times.push_back(d * 86400.0 + 36000.0);
  const auto p = estimate_significance(at_times(times), Granularity::weekday, 0.0, CalendarMapping{kMonday, 0});
  for (std::size_t b = 0; b < 5; ++b) EXPECT_EQ(p.values[b], 1.0);
  EXPECT_EQ(p.values[5], 0.0);
  EXPECT_EQ(p.values[6], 0.0);
}

TEST(Estimate, InvariantToLogDuplicationWithoutSmoothing) {
  const std::vector<Time> times{10.0, 4000.0, 90000.0, 90500.0, 400000.0};
  std::vector<Time> doubled;
  for (Time t : times) {
    doubled.push_back(t);
    doubled.push_back(std::nextafter(t, kInfinity));
  }
  for (auto g : {Granularity::weekday, Granularity::weekday_hour}) {
    EXPECT_EQ(estimate_significance(at_times(times), g, 0.0).values,
              estimate_significance(at_times(doubled), g, 0.0).values);
  }
}

TEST(Estimate, EmptyLogIsUniformWithWarning) {
  Diagnostics d;
  const auto p = estimate_significance(EventStream{}, Granularity::weekday_hour, 1.0, {}, &d);
  EXPECT_EQ(p.values, std::vector<double>(168, 1.0));
  EXPECT_EQ(d.warnings.size(), 1u);
  EXPECT_THROW(estimate_significance(EventStream{}, Granularity::weekday, -1.0), ConfigError);
}

TEST(Schedule, KnotsAtBucketBoundaries) {
  SignificanceProfile p{Granularity::weekday, 0.0, {1.0, 0.5, 0.25, 0.0, 0.0, 0.0, 0.0}};
  const auto s = significance_schedule(p, Horizon{43200.0, 2.5 * 86400.0}, CalendarMapping{kMonday, 0});
  EXPECT_EQ(std::vector<Time>(s.knots().begin(), s.knots().end()),
            (std::vector<Time>{43200.0, 86400.0, 172800.0, 216000.0}));
  EXPECT_EQ(std::vector<double>(s.rates().begin(), s.rates().end()), (std::vector<double>{1.0, 0.5, 0.25}));
}

TEST(Schedule, FollowsLocalTimeOffset) {
  SignificanceProfile p{Granularity::weekday, 0.0, {1.0, 0.5, 0.25, 0.0, 0.0, 0.0, 0.0}};
  // Two hours ahead of UTC: local Tuesday starts at 22:00 UTC on Monday.
  const auto s = significance_schedule(p, Horizon{0.0, 86400.0}, CalendarMapping{kMonday, 7200});
  EXPECT_EQ(s.knots()[1], 86400.0 - 7200.0);
  EXPECT_EQ(s.at(0.0), 1.0);
  EXPECT_EQ(s.at(86400.0 - 3600.0), 0.5);
}

TEST(SignificanceCsv, RoundTrip) {
  const auto a = estimate_significance(at_times({5.0, 7200.0, 100000.0}), Granularity::weekday_hour, 1.0);
  const auto b = estimate_significance(at_times({500000.0}), Granularity::weekday_hour, 1.0);
  std::stringstream out;
  write_significance_csv(out, {{"ann", a}, {"ben", b}});
  EXPECT_EQ(out.str().rfind("# normalization=max-bucket-equals-1 granularity=weekday-hour laplace=1\n", 0), 0u);
  const auto back = read_significance_csv(out, Granularity::weekday_hour);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].first, "ann");
  EXPECT_EQ(back[0].second.values, a.values);
  EXPECT_EQ(back[1].second.values, b.values);
}

TEST(SignificanceCsv, RejectsGaps) {
  std::stringstream in("follower_id,bucket_index,value\nann,0,1\nann,2,1\n");
  EXPECT_THROW(read_significance_csv(in, Granularity::weekday), ParseError);
}

}  // namespace
}  // namespace redqueen
