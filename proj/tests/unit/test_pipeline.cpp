#include <cmath>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "evdeblur/io.hpp"
#include "evdeblur/pipeline.hpp"
#include "fixtures.hpp"

namespace evd::testing {
namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("evdeblur_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig quick_joint_config() {
  ExperimentConfig cfg = small_config();
  cfg.optim.ldi_pretrain = 20;
  cfg.optim.iterations = 10;
  return cfg;
}

TEST(Synthesize, DefaultBundleHasSevenGroundTruthFrames) {
  const ExperimentConfig cfg;
  const DatasetBundle b = synthesize(cfg);
  const fs::path dir = scratch_dir("bundle_default");
  write_bundle(b, cfg, dir);
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  int frames = 0;
  for (const auto& a : manifest["artifacts"])
    if (a["path"].get<std::string>().starts_with("gt_frame_")) ++frames;
  EXPECT_EQ(frames, 7);
  EXPECT_EQ(b.schedule.size(), 7);
  EXPECT_EQ(b.gt_flows.size(), 6u);
}

TEST(Synthesize, StaticTrajectoryGivesNoEventsAndSharpBlur) {
  ExperimentConfig cfg = small_config();
  cfg.trajectory.translation_px.setZero();
  cfg.trajectory.rotation_deg.setZero();
  const DatasetBundle b = synthesize(cfg);
  EXPECT_TRUE(b.observation.events.empty());
  EXPECT_EQ(b.observation.blur, b.gt_frames[3]);
}

TEST(Synthesize, SameSeedGivesByteIdenticalBundles) {
  const ExperimentConfig cfg = small_config(3);
  const fs::path a = scratch_dir("bundle_a"), b = scratch_dir("bundle_b");
  write_bundle(synthesize(cfg), cfg, a);
  write_bundle(synthesize(cfg), cfg, b);
  for (const auto& e : fs::directory_iterator(a))
    EXPECT_EQ(read_file(e.path()), read_file(b / e.path().filename())) << e.path().filename();
}

TEST(Synthesize, BundleReadsBackIdentically) {
  const ExperimentConfig cfg = small_config(4);
  const DatasetBundle b = synthesize(cfg);
  const fs::path dir = scratch_dir("bundle_read");
  write_bundle(b, cfg, dir);
  const auto [back, back_cfg] = read_bundle(dir);
  EXPECT_EQ(back.observation.events, b.observation.events);
  EXPECT_LE(max_abs_diff(back.observation.blur, b.observation.blur), 0.5 / 65535.0 + 1e-15);
  EXPECT_EQ(config_to_text(back_cfg), config_to_text(cfg));
}

TEST(EdiBaseline, NoisyEventsLowerThePsnr) {
  ExperimentConfig cfg;
  const DatasetBundle clean = synthesize(cfg);
  cfg.synth.noise_rate = 20.0;
  const DatasetBundle noisy = synthesize(cfg);
  const double p_clean = run_edi_baseline(cfg, clean, 0.05).mid.psnr;
  const double p_noisy = run_edi_baseline(cfg, noisy, 0.05).mid.psnr;
  EXPECT_GE(p_clean, 35.0);
  EXPECT_LT(p_noisy, p_clean);
}

TEST(Perturb, MovesEveryControlPointByTheRequestedStep) {
  const DatasetBundle b = synthesize(small_config());
  const BezierTrajectory p = perturb_trajectory(b.gt_trajectory, 0.01, 0.02, 9);
  for (int j = 0; j < kControlPoints; ++j) {
    const PoseError e = pose_distance(p.control_points[j], b.gt_trajectory.control_points[j]);
    EXPECT_NEAR(e.rot_err, 0.01, 1e-9);
  }
  const BezierTrajectory none = perturb_trajectory(b.gt_trajectory, 0.0, 0.0, 9);
  const TrajectoryError err = trajectory_error(none, b.gt_trajectory, b.schedule);
  EXPECT_LT(err.trans_err + err.rot_err, 1e-12);
}

TEST(RunJoint, IsDeterministic) {
  const ExperimentConfig cfg = quick_joint_config();
  const DatasetBundle b = synthesize(cfg);
  const JointResult r1 = run_joint(cfg, b);
  const JointResult r2 = run_joint(cfg, b);
  EXPECT_EQ(metrics_csv(r1.rows, cfg.term_mask()), metrics_csv(r2.rows, cfg.term_mask()));
  EXPECT_EQ(r1.rows.size(), 11u);
  EXPECT_FALSE(r1.failure.has_value());
}

TEST(RunJoint, AblatedTermsAreLoggedAsDisabled) {
  ExperimentConfig cfg = quick_joint_config();
  cfg.optim.iterations = 2;
  cfg.ablate = {Term::ev_w};
  const DatasetBundle b = synthesize(cfg);
  const JointResult r = run_joint(cfg, b);
  const std::string csv = metrics_csv(r.rows, cfg.term_mask());
  EXPECT_NE(csv.find(",disabled,"), std::string::npos);
  for (const MetricsRow& row : r.rows) EXPECT_EQ(row.terms[Term::ev_w], 0.0);
}

TEST(RunJoint, ObjectiveDecreasesOverEveryFiftyStepWindow) {
  ExperimentConfig cfg = small_config();
  cfg.optim.ldi_pretrain = 100;
  cfg.optim.iterations = 500;
  const DatasetBundle b = synthesize(cfg);
  const JointResult r = run_joint(cfg, b);
  ASSERT_EQ(r.rows.size(), 501u);
  for (std::size_t k = 0; k + 50 < r.rows.size(); ++k)
    EXPECT_LT(r.rows[k + 50].terms.total, r.rows[k].terms.total) << "window starting at step " << k;
}

// Adam normalizes the step size, so even a vanishing gradient moves the trajectory by
// about the learning rate. Kept as a faithful fixed-point check.
TEST(RunJoint, UnperturbedStartStaysPut) {
  ExperimentConfig cfg = small_config();
  cfg.optim.ldi_pretrain = 100;
  cfg.optim.iterations = 10;
  cfg.optim.perturb_rotation_deg = 0.0;
  cfg.optim.perturb_translation_px = 0.0;
  const DatasetBundle b = synthesize(cfg);
  const JointResult r = run_joint(cfg, b);
  EXPECT_LT(r.initial_error.trans_err, 1e-12);
  EXPECT_LT(r.final_error.trans_err, 1e-6);
  EXPECT_LT(r.final_error.rot_err, 1e-6);
}

}  // namespace
}  // namespace evd::testing
