#include <cmath>

#include <gtest/gtest.h>

#include "evdeblur/event_core.hpp"
#include "fixtures.hpp"

namespace evd::testing {
namespace {

TEST(EventStream, RejectsInvalidEvents) {
  EXPECT_THROW(EventStream(4, 4, 0, 10, {{5, 0, 0, 1}, {3, 0, 0, 1}}), RangeError);
  EXPECT_THROW(EventStream(4, 4, 0, 10, {{5, 4, 0, 1}}), RangeError);
  EXPECT_THROW(EventStream(4, 4, 0, 10, {{5, 0, 0, 0}}), Error);
  EXPECT_THROW(EventStream(4, 4, 0, 10, {{11, 0, 0, 1}}), RangeError);
  EXPECT_NO_THROW(EventStream(4, 4, 0, 10, {{0, 3, 3, -1}, {10, 0, 0, 1}}));
}

TEST(EventStream, FromUnsortedKeepsEqualTimesInInputOrder) {
  const auto s = EventStream::from_unsorted(4, 4, 0, 10, {{7, 1, 1, 1}, {2, 0, 0, -1}, {7, 2, 2, -1}});
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.events()[0].t, 2);
  EXPECT_EQ(s.events()[1].x, 1);
  EXPECT_EQ(s.events()[2].x, 2);
}

TEST(Accumulate, EmptyStreamGivesZeroMap) {
  const EventStream s(8, 6, 0, 100);
  const ScalarMap m = accumulate(s, 0, 100);
  EXPECT_EQ(m.width(), 8);
  EXPECT_EQ(m.height(), 6);
  EXPECT_EQ(max_abs(m), 0.0);
}

TEST(Accumulate, CountsEventsAtTheirPixel) {
  const EventStream s(8, 8, 0, 100, {{10, 3, 4, 1}, {20, 3, 4, 1}});
  const ScalarMap m = accumulate(s, 0, 100);
  EXPECT_EQ(m(3, 4), 2.0);
  EXPECT_EQ(sum(m), 2.0);
}

TEST(Accumulate, MatchesBruteForceOverFilteredEvents) {
  const EventStream s = random_stream(10, 7, 0, 1000, 100, 5);
  const Timestamp a = 250, b = 750;
  ScalarMap expected(10, 7);
  for (const Event& e : s.events())
    if (e.t >= a && e.t < b) expected(e.x, e.y) += e.p;
  EXPECT_EQ(accumulate(s, a, b), expected);
}

TEST(Accumulate, HalfOpenWindowDoesNotDoubleCount) {
  const EventStream s(2, 1, 0, 10, {{5, 0, 0, 1}});
  EXPECT_EQ(sum(accumulate(s, 0, 5)), 0.0);
  EXPECT_EQ(sum(accumulate(s, 5, 10)), 1.0);
}

TEST(Accumulate, OrientationAndAdditivity) {
  const EventStream s = random_stream(6, 6, 0, 1000, 300, 6);
  EXPECT_EQ(accumulate(s, 800, 100), -1.0 * accumulate(s, 100, 800));
  EXPECT_EQ(accumulate(s, 100, 900), accumulate(s, 100, 420) + accumulate(s, 420, 900));
}

TEST(Accumulate, WindowOutsideStreamIsRangeError) {
  const EventStream s(4, 4, 100, 200);
  EXPECT_THROW(accumulate(s, 50, 150), RangeError);
  EXPECT_THROW(accumulate(s, 150, 250), RangeError);
}

TEST(DeltaLog, ScalesCountsByThreshold) {
  const EventStream s(8, 8, 0, 100, {{40, 3, 4, 1}});
  EXPECT_DOUBLE_EQ(delta_log(s, 0, 100, 0.2)(3, 4), 0.2);
  EXPECT_EQ(max_abs(delta_log(s, 40, 40, 0.2)), 0.0);
  EXPECT_DOUBLE_EQ(delta_log(s, 100, 0, 0.2)(3, 4), -0.2);
}

TEST(DeltaLog, LinearInThreshold) {
  const EventStream s = random_stream(6, 6, 0, 1000, 200, 7);
  const ScalarMap a = delta_log(s, 0, 1000, 0.15);
  const ScalarMap b = delta_log(s, 0, 1000, 0.45);
  EXPECT_LT(max_abs_diff(3.0 * a, b), 1e-12);
}

TEST(DeltaLog, RejectsNonPositiveThreshold) {
  const EventStream s(4, 4, 0, 10);
  EXPECT_THROW(delta_log(s, 0, 10, 0.0), ParameterError);
  EXPECT_THROW(delta_log(s, 0, 10, -0.1), ParameterError);
}

TEST(NormalizeL2, SingleEntryBecomesOne) {
  ScalarMap m(5, 5);
  m(2, 1) = 5.0;
  const NormalizedMap n = normalize_l2(m);
  EXPECT_DOUBLE_EQ(n.map(2, 1), 1.0);
  EXPECT_DOUBLE_EQ(n.norm, 5.0);
  EXPECT_FALSE(n.degenerate);
}

TEST(NormalizeL2, ZeroMapIsFlaggedDegenerate) {
  const NormalizedMap n = normalize_l2(ScalarMap(4, 4));
  EXPECT_TRUE(n.degenerate);
  EXPECT_EQ(max_abs(n.map), 0.0);
}

TEST(NormalizeL2, RandomMapHasUnitNormAndIgnoresPositiveScale) {
  Rng rng(8);
  const ScalarMap m = random_map(9, 7, rng, -2.0, 3.0);
  const NormalizedMap n = normalize_l2(m);
  double sq = 0.0;
  for (double v : n.map.values()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
  for (double c : {1e-3, 0.7, 42.0, 1e5}) EXPECT_LT(max_abs_diff(normalize_l2(c * m).map, n.map), 1e-15);
}

}  // namespace
}  // namespace evd::testing
