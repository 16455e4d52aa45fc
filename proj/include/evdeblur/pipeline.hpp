#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evdeblur/config.hpp"
#include "evdeblur/edi.hpp"
#include "evdeblur/geometry.hpp"
#include "evdeblur/ldi.hpp"
#include "evdeblur/losses.hpp"
#include "evdeblur/toyscene.hpp"

namespace evd {

struct DatasetBundle {
  PlanarScene scene;
  BezierTrajectory gt_trajectory;
  SampleSchedule schedule;
  BlurObservation observation;
  FrameStack gt_frames;
  std::vector<FlowField> gt_flows;  ///< forward flow over each schedule interval
};

PlanarScene make_scene(const ExperimentConfig& cfg);
BezierTrajectory make_gt_trajectory(const ExperimentConfig& cfg);
/// Moves every control point by an independent random tangent step of the given rotation
/// angle (radians) and translation length (scene units).
BezierTrajectory perturb_trajectory(const BezierTrajectory& traj, double rotation, double translation,
                                    std::uint64_t seed);
SampleSchedule make_schedule(const ExperimentConfig& cfg, const ExposureWindow& exposure);
FrameStack render_stack(const PlanarScene& scene, const BezierTrajectory& traj, const SampleSchedule& schedule);
std::vector<FlowField> interval_flows(const PlanarScene& scene, const BezierTrajectory& traj,
                                      const SampleSchedule& schedule);

DatasetBundle synthesize(const ExperimentConfig& cfg);

/// Writes every artifact plus manifest.json (paths and SHA-256 checksums) into `dir`.
void write_bundle(const DatasetBundle& bundle, const ExperimentConfig& cfg, const std::filesystem::path& dir);
/// Returns the bundle and the configuration it was synthesized with.
std::pair<DatasetBundle, ExperimentConfig> read_bundle(const std::filesystem::path& dir);
/// manifest.json listing the given files (relative to `dir`) with checksums.
void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& files,
                    const std::string& kind);

/// Flows used by the losses: ground truth or contrast-maximization estimates.
std::vector<FlowField> loss_flows(const ExperimentConfig& cfg, const DatasetBundle& bundle);

struct FrameMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EdiResult {
  double theta = 0.0;
  FrameStack frames;
  std::vector<FrameMetrics> per_frame;
  FrameMetrics mid;
  FrameMetrics blur_mid;  ///< the blurry input against the mid-exposure ground truth
};

EdiResult run_edi_baseline(const ExperimentConfig& cfg, const DatasetBundle& bundle, double theta);

struct LdiTrainingRow {
  int step = 0;
  LdiLoss loss;
  double mid_psnr = 0.0;
};

struct LdiTrainingResult {
  LdiNetwork net;
  std::vector<LdiTrainingRow> rows;
};

/// Trains on the LDI self-supervised loss alone.
LdiTrainingResult train_ldi(const ExperimentConfig& cfg, const DatasetBundle& bundle, LdiNetwork net, int steps);

struct MetricsRow {
  int step = 0;
  LossBreakdown terms;
  double psnr = 0.0;
  double ssim = 0.0;
  double rot_err = 0.0;
  double trans_err = 0.0;
};

struct TrajectoryError {
  double rot_err = 0.0;    ///< mean over schedule timestamps, radians
  double trans_err = 0.0;  ///< mean over schedule timestamps, scene units
};

TrajectoryError trajectory_error(const BezierTrajectory& estimate, const BezierTrajectory& truth,
                                 const SampleSchedule& schedule);

struct JointResult {
  BezierTrajectory initial_trajectory;
  BezierTrajectory trajectory;
  LdiNetwork net;
  FrameStack rendered;
  FrameStack ldi;
  std::vector<MetricsRow> rows;
  TrajectoryError initial_error;
  TrajectoryError final_error;
  FrameMetrics blur_mid;
  FrameMetrics initial_mid;
  FrameMetrics final_mid;
  FrameMetrics ldi_mid;
  std::optional<std::string> failure;  ///< set when the run stopped on a non-finite objective
};

/// Joint optimization of trajectory and LDI weights. Without a pretrained network, a fresh
/// one is trained for cfg.optim.ldi_pretrain steps first.
JointResult run_joint(const ExperimentConfig& cfg, const DatasetBundle& bundle,
                      std::optional<LdiNetwork> pretrained = std::nullopt);

std::string metrics_csv(const std::vector<MetricsRow>& rows, const TermMask& mask);
std::string ldi_training_csv(const std::vector<LdiTrainingRow>& rows);

}  // namespace evd
