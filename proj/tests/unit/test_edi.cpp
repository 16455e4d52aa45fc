#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "evdeblur/edi.hpp"
#include "evdeblur/losses.hpp"
#include "evdeblur/pipeline.hpp"
#include "fixtures.hpp"

namespace evd::testing {
namespace {

const DatasetBundle& default_bundle() {
  static const DatasetBundle b = synthesize(ExperimentConfig{});
  return b;
}

TEST(DoubleIntegral, EmptyStreamIsOne) {
  const EventStream s(6, 5, 0, 1000);
  const ScalarMap e = double_integral(s, 400, {0, 1000}, 0.2);
  for (double v : e.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(DoubleIntegral, SingleMidExposureEventHasClosedForm) {
  const double theta = 0.3;
  const Timestamp t_len = 1'000'000;
  const EventStream s(4, 4, 0, t_len, {{t_len / 2, 2, 1, 1}});
  const ScalarMap e = double_integral(s, 0, {0, t_len}, theta);
  EXPECT_NEAR(e(2, 1), 0.5 + 0.5 * std::exp(theta), 1e-12);
  EXPECT_DOUBLE_EQ(e(0, 0), 1.0);
}

TEST(DoubleIntegral, MatchesTenfoldRefinedQuadrature) {
  const DatasetBundle& b = default_bundle();
  const ExposureWindow ex = b.observation.exposure;
  for (Timestamp f : {ex.t_open, b.schedule.times[b.schedule.mid()], b.schedule.times[5]}) {
    const ScalarMap coarse = double_integral(b.observation.events, f, ex, 0.05, kDefaultEdiSubsteps);
    const ScalarMap fine = double_integral(b.observation.events, f, ex, 0.05, 10 * kDefaultEdiSubsteps);
    for (std::size_t i = 0; i < coarse.size(); ++i) EXPECT_NEAR(coarse[i] / fine[i], 1.0, 1e-3);
  }
}

TEST(DoubleIntegral, IsPositiveForRandomStreams) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EventStream s = random_stream(12, 12, 0, 5000, 4000, seed);
    const ScalarMap e = double_integral(s, 2500, {0, 5000}, 0.5);
    for (double v : e.values()) EXPECT_GT(v, 0.0);
  }
}

TEST(EdiDeblur, StaticSceneReturnsBlur) {
  Rng rng(1);
  const BlurObservation obs{random_map(8, 8, rng, 0.1, 0.9), {0, 1000}, EventStream(8, 8, 0, 1000)};
  for (Timestamp f : {0, 500, 1000}) EXPECT_EQ(edi_deblur(obs, f, 0.1), obs.blur);
}

TEST(EdiDeblur, RecoversMidFrameWithTrueThreshold) {
  const DatasetBundle& b = default_bundle();
  const Image mid = edi_deblur(b.observation, b.schedule.times[b.schedule.mid()], 0.05);
  EXPECT_GE(psnr(mid, b.gt_frames[b.schedule.mid()]), 35.0);
}

TEST(EdiDeblur, OverestimatedThresholdIsWorse) {
  const DatasetBundle& b = default_bundle();
  const Timestamp f = b.schedule.times[b.schedule.mid()];
  const Image& gt = b.gt_frames[b.schedule.mid()];
  EXPECT_LT(psnr(edi_deblur(b.observation, f, 0.065), gt), psnr(edi_deblur(b.observation, f, 0.05), gt));
}

TEST(EdiDeblur, AverageOfUnclampedFramesTimesIntegralIsBlur) {
  Rng rng(2);
  const EventStream s = random_stream(10, 9, 0, 9000, 2000, 3);
  const BlurObservation obs{random_map(10, 9, rng, 0.05, 0.95), {0, 9000}, s};
  Image acc(10, 9);
  const std::vector<Timestamp> fs{0, 1500, 3000, 4500, 6000, 7500, 9000};
  for (Timestamp f : fs) {
    const Image latent = edi_deblur(obs, f, 0.3, kDefaultEdiSubsteps, std::numeric_limits<double>::infinity());
    const ScalarMap e = double_integral(s, f, obs.exposure, 0.3);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += latent[i] * e[i] / fs.size();
  }
  EXPECT_LE(max_abs_diff(acc, obs.blur), 1e-12);
}

TEST(EdiDeblur, ClampsToRange) {
  const EventStream s(2, 1, 0, 1000, {{10, 0, 0, -1}, {20, 0, 0, -1}, {30, 0, 0, -1}});
  const BlurObservation obs{Image(2, 1, 0.9), {0, 1000}, s};
  const Image out = edi_deblur(obs, 0, 2.0);
  EXPECT_LE(out(0, 0), kEdiClampMax);
  EXPECT_GE(out(0, 0), 0.0);
}

TEST(EstimateTheta, SingletonReturnsCandidate) {
  const DatasetBundle& b = default_bundle();
  const std::vector<double> c{0.05};
  const ThetaEstimate est = estimate_theta(b.observation, c);
  EXPECT_EQ(est.theta, 0.05);
  EXPECT_EQ(est.scores.size(), 1u);
}

TEST(EstimateTheta, NoEventsIsATieOnTheFirstCandidate) {
  Rng rng(3);
  const BlurObservation obs{random_map(8, 8, rng, 0.1, 0.9), {0, 1000}, EventStream(8, 8, 0, 1000)};
  const std::vector<double> c{0.2, 0.1, 0.3};
  const ThetaEstimate est = estimate_theta(obs, c);
  EXPECT_TRUE(est.tie);
  EXPECT_EQ(est.theta, 0.2);
  EXPECT_EQ(est.best_index, 0u);
}

TEST(EstimateTheta, EmptyCandidateListIsRejected) {
  const DatasetBundle& b = default_bundle();
  EXPECT_THROW(estimate_theta(b.observation, std::vector<double>{}), ParameterError);
}

// Laplacian-variance sharpness keeps rising past the true threshold on this data, so the
// sweep is expected to pick an overestimate. Kept as a faithful check.
TEST(EstimateTheta, GridAroundTrueThresholdPicksTrueThreshold) {
  const DatasetBundle& b = default_bundle();
  const std::vector<double> c{0.025, 0.035, 0.045, 0.05, 0.055, 0.065, 0.075};
  const ThetaEstimate est = estimate_theta(b.observation, c);
  EXPECT_NEAR(est.theta, 0.05, 0.005);
}

}  // namespace
}  // namespace evd::testing
