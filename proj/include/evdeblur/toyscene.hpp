#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "evdeblur/event_core.hpp"
#include "evdeblur/geometry.hpp"

namespace evd {

struct Intrinsics {
  double fx = 64.0;
  double fy = 64.0;
  double cx = 31.5;
  double cy = 31.5;

  Eigen::Matrix3d matrix() const;
};

/// Textured plane seen by a pinhole camera; stands in for a radiance-field renderer.
/// Sensor pixel p at the identity pose sees texture coordinate p + texture_origin.
struct PlanarScene {
  Image texture;  ///< linear intensity in [0,1]
  int width = 64;
  int height = 64;
  Eigen::Vector2d texture_origin = Eigen::Vector2d::Zero();
  Eigen::Vector3d plane_normal = Eigen::Vector3d::UnitZ();
  double plane_depth = 1.0;
  Intrinsics intrinsics;
  double intensity_floor = 1e-3;
  double border_value = 0.5;

  /// Throws ParameterError on out-of-range texture values, non-positive depth or focal lengths.
  void validate() const;
};

/// Per-pixel displacement (pixels) accumulated over `interval` nanoseconds.
struct FlowField {
  ScalarMap u;
  ScalarMap v;
  Timestamp interval = 1;

  FlowField() = default;
  FlowField(int width, int height, Timestamp interval);
  static FlowField uniform(int width, int height, double du, double dv, Timestamp interval);

  int width() const { return u.width(); }
  int height() const { return u.height(); }
  /// Displacement over `dt` nanoseconds at pixel (x, y), assuming constant velocity.
  Eigen::Vector2d displacement(int x, int y, double dt) const;
};

struct SynthConfig {
  double theta_pos = 0.05;
  double theta_neg = 0.05;
  Timestamp refractory_ns = 0;
  double noise_rate = 0.0;  ///< background events per pixel per second
  int substep_count = 512;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

/// H = K (R - t n^T / d) K^-1, mapping identity-pose pixels to pixels at `pose`.
Eigen::Matrix3d plane_homography(const PlanarScene& scene, const SE3Pose& pose);

Image render(const PlanarScene& scene, const SE3Pose& pose);

/// Forward flow: where the scene point seen at pixel x under pose_a appears under pose_b.
FlowField gt_flow(const PlanarScene& scene, const SE3Pose& pose_a, const SE3Pose& pose_b, Timestamp interval);

/// Midpoint-rule average of `substeps` rendered frames over the exposure.
Image synth_blur(const PlanarScene& scene, const BezierTrajectory& traj, int substeps);

EventStream synth_events(const PlanarScene& scene, const BezierTrajectory& traj, const SynthConfig& cfg);

/// Threshold-crossing event generation from latent frames sampled at increasing times
/// (fractional nanoseconds allowed). Background noise, if configured, is drawn over `window`.
EventStream events_from_frames(std::span<const Image> frames, std::span<const double> times,
                               const ExposureWindow& window, double intensity_floor, const SynthConfig& cfg);

/// Smooth random texture: Gaussian blobs over a gentle gradient, values in [0.1, 0.9].
Image make_blob_texture(int width, int height, std::uint64_t seed, int blob_count = 40);

}  // namespace evd
