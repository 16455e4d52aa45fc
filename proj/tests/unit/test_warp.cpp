#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "evdeblur/pipeline.hpp"
#include "evdeblur/warp.hpp"
#include "fixtures.hpp"

namespace evd::testing {
namespace {

// Texture translating 12 px to the right over the exposure at constant velocity.
const DatasetBundle& translating_bundle() {
  static const DatasetBundle b = [] {
    ExperimentConfig cfg;
    cfg.trajectory.translation_px = {12.0, 0.0, 0.0};
    cfg.trajectory.rotation_deg.setZero();
    cfg.trajectory.acceleration = 0.0;
    return synthesize(cfg);
  }();
  return b;
}

TEST(WarpEvents, ZeroFlowEqualsDeltaLog) {
  const EventStream s = random_stream(12, 10, 0, 10'000, 3000, 1);
  const FlowField zero(12, 10, 10'000);
  const WarpedAccumulation w = warp_events(s, zero, 8000, 2000, 9000, 0.2);
  EXPECT_LT(max_abs_diff(w.map, delta_log(s, 2000, 9000, 0.2)), 1e-12);
  EXPECT_EQ(w.dropped, 0u);
}

TEST(WarpEvents, EventsAtReferenceTimeDoNotMove) {
  std::vector<Event> ev;
  Rng rng(2);
  for (int k = 0; k < 200; ++k)
    ev.push_back({500, static_cast<int>(uniform_index(rng, 9)), static_cast<int>(uniform_index(rng, 7)),
                  uniform01(rng) < 0.5 ? -1 : 1});
  const EventStream s(9, 7, 0, 1000, ev);
  const FlowField flow = FlowField::uniform(9, 7, 3.3, -1.7, 1000);
  const WarpedAccumulation w = warp_events(s, flow, 500, 0, 1000, 0.1);
  EXPECT_LT(max_abs_diff(w.map, delta_log(s, 0, 1000, 0.1)), 1e-12);
}

TEST(WarpEvents, SplattingConservesMass) {
  std::vector<Event> ev;
  Rng rng(3);
  for (int k = 0; k < 2000; ++k)
    ev.push_back({static_cast<Timestamp>(uniform_index(rng, 10'000)), static_cast<int>(uniform_index(rng, 16)),
                  static_cast<int>(uniform_index(rng, 16)), 1});
  const EventStream s = EventStream::from_unsorted(16, 16, 0, 10'000, ev);
  const auto flows = random_flows(1, 16, 16, 10'000, 4.0, 4);
  const double theta = 0.07;
  const WarpedAccumulation w = warp_events(s, flows[0], 10'000, 0, 10'000, theta);
  double abs_sum = 0.0;
  for (double v : w.map.values()) abs_sum += std::abs(v);
  EXPECT_NEAR(abs_sum, theta * static_cast<double>(w.in_bounds), 1e-9);
  EXPECT_EQ(w.in_bounds + w.dropped, s.size());
  EXPECT_GT(w.dropped, 0u);
}

TEST(WarpEvents, GroundTruthFlowConcentratesEvents) {
  const DatasetBundle& b = translating_bundle();
  const ExposureWindow ex = b.observation.exposure;
  const FlowField flow = gt_flow(b.scene, pose_at(b.gt_trajectory, ex.t_open), pose_at(b.gt_trajectory, ex.t_close),
                                 ex.duration());
  const FlowField zero(flow.width(), flow.height(), ex.duration());
  const Timestamp ref = (ex.t_open + ex.t_close) / 2;
  const double warped = warp_events(b.observation.events, flow, ref, ex.t_open, ex.t_close, 0.05).variance;
  const double plain = warp_events(b.observation.events, zero, ref, ex.t_open, ex.t_close, 0.05).variance;
  EXPECT_GE(warped / plain, 1.5);
}

TEST(WarpEvents, GroundTruthFlowBeatsPerturbedFlows) {
  const DatasetBundle& b = translating_bundle();
  const ExposureWindow ex = b.observation.exposure;
  const FlowField flow = gt_flow(b.scene, pose_at(b.gt_trajectory, ex.t_open), pose_at(b.gt_trajectory, ex.t_close),
                                 ex.duration());
  const Timestamp ref = (ex.t_open + ex.t_close) / 2;
  const double at_truth = warp_events(b.observation.events, flow, ref, ex.t_open, ex.t_close, 0.05).variance;
  for (int dx = -2; dx <= 2; dx += 2)
    for (int dy = -2; dy <= 2; dy += 2) {
      if (dx == 0 && dy == 0) continue;
      FlowField p = flow;
      for (std::size_t i = 0; i < p.u.size(); ++i) {
        p.u[i] += dx;
        p.v[i] += dy;
      }
      EXPECT_GE(at_truth, warp_events(b.observation.events, p, ref, ex.t_open, ex.t_close, 0.05).variance)
          << dx << "," << dy;
    }
}

TEST(WarpedPredChange, UniformFrameGivesZero) {
  const FlowField flow = FlowField::uniform(10, 10, 1.2, -0.4, 100);
  EXPECT_EQ(max_abs(warped_pred_change(Image(10, 10, 0.4), flow, 100)), 0.0);
}

TEST(WarpedPredChange, ZeroFlowGivesZero) {
  Rng rng(5);
  const FlowField flow(10, 10, 100);
  EXPECT_EQ(max_abs(warped_pred_change(random_map(10, 10, rng, 0.1, 0.9), flow, 100)), 0.0);
}

TEST(WarpedPredChange, LogRampGivesConstantChange) {
  const double slope = 0.05;
  const double floor = 1e-3;
  Image frame(20, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 20; ++x) frame(x, y) = std::exp(-1.5 + slope * x) - floor;
  const double u = 1.5;
  const ScalarMap pred = warped_pred_change(frame, FlowField::uniform(20, 6, u, 0.0, 100), 100, floor);
  for (int y = 0; y < 6; ++y)
    for (int x = 4; x < 16; ++x) EXPECT_NEAR(pred(x, y), -slope * u, 1e-9) << x;
}

TEST(CmFlow, StaticSceneGivesZeroFlow) {
  const EventStream s(8, 8, 0, 1000);
  const auto grid = flow_search_grid(2.0, 0.5);
  const FlowField f = cm_flow_estimate(s, 0, 1000, grid);
  EXPECT_EQ(max_abs(f.u), 0.0);
  EXPECT_EQ(max_abs(f.v), 0.0);
}

TEST(CmFlow, RecoversTranslationWithinATenthOfAPixel) {
  const DatasetBundle& b = translating_bundle();
  const SampleSchedule& sch = b.schedule;
  const auto grid = flow_search_grid(4.0, 0.5);
  for (int i : {1, 3}) {
    const FlowField est = cm_flow_estimate(b.observation.events, sch.times[i], sch.times[i + 1], grid);
    const FlowField& truth = b.gt_flows[i];
    EXPECT_NEAR(est.u[0], truth.u[0], 0.1) << i;
    EXPECT_NEAR(est.v[0], truth.v[0], 0.1) << i;
  }
}

TEST(CmFlow, GridMissingTheTruthStillReturnsAFlow) {
  const DatasetBundle& b = translating_bundle();
  const SampleSchedule& sch = b.schedule;
  const std::vector<Eigen::Vector2d> grid{{-3.0, -3.0}, {-3.0, 3.0}};
  const FlowField est = cm_flow_estimate(b.observation.events, sch.times[2], sch.times[3], grid);
  EXPECT_TRUE(all_finite(est.u));
  EXPECT_TRUE(all_finite(est.v));
}

TEST(CmFlow, EmptyGridIsRejected) {
  const EventStream s(8, 8, 0, 1000);
  EXPECT_THROW(cm_flow_estimate(s, 0, 1000, std::vector<Eigen::Vector2d>{}), ParameterError);
}

}  // namespace
}  // namespace evd::testing
