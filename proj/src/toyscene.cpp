#include "evdeblur/toyscene.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/LU>

#include "evdeblur/random.hpp"

namespace evd {
namespace {

constexpr double kDegenerateDet = 1e-12;
constexpr double kCrossingTolerance = 1e-9;

struct Projector {
  Eigen::Matrix3d map;  // sensor pixel -> homogeneous target coordinate
};

Eigen::Matrix3d checked_inverse(const Eigen::Matrix3d& h) {
  if (std::abs(h.determinant()) < kDegenerateDet) {
    throw GeometryError("degenerate plane homography");
  }
  return h.inverse();
}

Eigen::Vector2d apply(const Eigen::Matrix3d& h, double x, double y) {
  const Eigen::Vector3d q = h * Eigen::Vector3d(x, y, 1.0);
  if (!(q.z() > 0.0)) {
    throw GeometryError("scene plane behind the camera at pixel (" + std::to_string(x) + ", " +
                        std::to_string(y) + ")");
  }
  return q.head<2>() / q.z();
}

}  // namespace

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void PlanarScene::validate() const {
  if (texture.empty()) throw ParameterError("scene texture is empty");
  for (double v : texture.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("scene texture values must lie in [0,1]");
  }
  if (width < 1 || height < 1) throw ParameterError("sensor dimensions must be positive");
  if (!(plane_depth > 0.0)) throw ParameterError("plane depth must be positive");
  if (!(intrinsics.fx > 0.0 && intrinsics.fy > 0.0)) throw ParameterError("focal lengths must be positive");
  if (!(intensity_floor > 0.0)) throw ParameterError("intensity floor must be positive");
  if (std::abs(plane_normal.norm() - 1.0) > 1e-9) throw ParameterError("plane normal must be unit length");
}

FlowField::FlowField(int width, int height, Timestamp interval_ns)
    : u(width, height), v(width, height), interval(interval_ns) {
  if (interval_ns <= 0) throw ParameterError("flow reference interval must be positive");
}

FlowField FlowField::uniform(int width, int height, double du, double dv, Timestamp interval_ns) {
  FlowField f(width, height, interval_ns);
  f.u.fill(du);
  f.v.fill(dv);
  return f;
}

Eigen::Vector2d FlowField::displacement(int x, int y, double dt) const {
  const double s = dt / static_cast<double>(interval);
  return {u(x, y) * s, v(x, y) * s};
}

void SynthConfig::validate() const {
  if (!(theta_pos > 0.0 && theta_neg > 0.0)) throw ParameterError("contrast thresholds must be positive");
  if (refractory_ns < 0) throw ParameterError("refractory period must be non-negative");
  if (!(noise_rate >= 0.0)) throw ParameterError("noise rate must be non-negative");
  if (substep_count < 2) throw ParameterError("substep_count must be at least 2");
}

Eigen::Matrix3d plane_homography(const PlanarScene& scene, const SE3Pose& pose) {
  const Eigen::Matrix3d k = scene.intrinsics.matrix();
  const Eigen::Matrix3d m =
      pose.rotation_matrix() - pose.translation * scene.plane_normal.transpose() / scene.plane_depth;
  return k * m * k.inverse();
}

Image render(const PlanarScene& scene, const SE3Pose& pose) {
  const Eigen::Matrix3d h_inv = checked_inverse(plane_homography(scene, pose));
  Image out(scene.width, scene.height);
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const Eigen::Vector2d q = apply(h_inv, x, y);
      out(x, y) = sample_bilinear(scene.texture, q.x() + scene.texture_origin.x(), q.y() + scene.texture_origin.y(),
                                  scene.border_value);
    }
  }
  return out;
}

FlowField gt_flow(const PlanarScene& scene, const SE3Pose& pose_a, const SE3Pose& pose_b, Timestamp interval) {
  const Eigen::Matrix3d h_a = plane_homography(scene, pose_a);
  const Eigen::Matrix3d h_b = plane_homography(scene, pose_b);
  checked_inverse(h_b);
  const Eigen::Matrix3d a_to_b = h_b * checked_inverse(h_a);
  const Eigen::Matrix3d a_to_ref = checked_inverse(h_a);
  FlowField flow(scene.width, scene.height, interval);
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      apply(a_to_ref, x, y);
      const Eigen::Vector2d p = apply(a_to_b, x, y);
      flow.u(x, y) = p.x() - x;
      flow.v(x, y) = p.y() - y;
    }
  }
  return flow;
}

Image synth_blur(const PlanarScene& scene, const BezierTrajectory& traj, int substeps) {
  if (substeps < 2) throw ParameterError("blur synthesis needs at least 2 substeps");
  // Extended-precision accumulation: a constant integrand averages back to itself bit-for-bit.
  std::vector<long double> acc(static_cast<std::size_t>(scene.width) * scene.height, 0.0L);
  for (int s = 0; s < substeps; ++s) {
    const double tau = (s + 0.5) / substeps;
    const Image frame = render(scene, pose_at_tau(traj, tau));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += frame[i];
  }
  Image out(scene.width, scene.height);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<double>(acc[i] / substeps);
  return out;
}

EventStream events_from_frames(std::span<const Image> frames, std::span<const double> times,
                               const ExposureWindow& window, double intensity_floor, const SynthConfig& cfg) {
  cfg.validate();
  if (frames.size() < 2 || frames.size() != times.size()) {
    throw ParameterError("event synthesis needs at least two frames with matching timestamps");
  }
  const int width = frames.front().width();
  const int height = frames.front().height();
  const std::size_t pixels = frames.front().size();
  std::vector<std::vector<double>> log_frames(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    require_same_shape(frames[k], frames.front(), "event synthesis frames");
    if (k > 0 && !(times[k] > times[k - 1])) throw ParameterError("frame timestamps must increase");
    log_frames[k].resize(pixels);
    for (std::size_t i = 0; i < pixels; ++i) log_frames[k][i] = std::log(frames[k][i] + intensity_floor);
  }

  const double max_step = 4.0 * std::min(cfg.theta_pos, cfg.theta_neg);
  for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
    for (std::size_t i = 0; i < pixels; ++i) {
      if (std::abs(log_frames[k + 1][i] - log_frames[k][i]) >= max_step) {
        throw SamplingError("undersampled motion at pixel (" + std::to_string(i % width) + ", " +
                            std::to_string(i / width) + "), substep " + std::to_string(k) +
                            ": log change exceeds 4 x threshold");
      }
    }
  }

  const auto clamp_time = [&](double t) {
    const auto r = static_cast<Timestamp>(std::llround(t));
    return std::clamp(r, window.t_open, window.t_close);
  };

  std::vector<Event> events;
  for (std::size_t i = 0; i < pixels; ++i) {
    const int x = static_cast<int>(i % static_cast<std::size_t>(width));
    const int y = static_cast<int>(i / static_cast<std::size_t>(width));
    double ref = log_frames[0][i];
    Timestamp last_emit = window.t_open;
    bool emitted = false;
    auto emit = [&](double t, int p) {
      const Timestamp ts = clamp_time(t);
      if (emitted && cfg.refractory_ns > 0 && ts - last_emit < cfg.refractory_ns) return;
      events.push_back({ts, x, y, p});
      last_emit = ts;
      emitted = true;
    };
    for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
      const double la = log_frames[k][i];
      const double lb = log_frames[k + 1][i];
      if (lb == la) continue;
      const double ta = times[k];
      const double tb = times[k + 1];
      auto crossing_time = [&](double level) {
        const double frac = std::clamp((level - la) / (lb - la), 0.0, 1.0);
        return ta + frac * (tb - ta);
      };
      while (lb >= ref + cfg.theta_pos - kCrossingTolerance) {
        ref += cfg.theta_pos;
        emit(crossing_time(ref), 1);
      }
      while (lb <= ref - cfg.theta_neg + kCrossingTolerance) {
        ref -= cfg.theta_neg;
        emit(crossing_time(ref), -1);
      }
    }
    if (cfg.noise_rate > 0.0) {
      Rng rng(derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(i)));
      const double seconds = static_cast<double>(window.duration()) * 1e-9;
      const std::uint64_t count = poisson(rng, cfg.noise_rate * seconds);
      for (std::uint64_t n = 0; n < count; ++n) {
        const auto t = window.t_open + static_cast<Timestamp>(uniform_index(rng, static_cast<std::uint64_t>(window.duration())));
        const int p = uniform_index(rng, 2) == 0 ? 1 : -1;
        events.push_back({t, x, y, p});
      }
    }
  }
  return EventStream::from_unsorted(width, height, window.t_open, window.t_close, std::move(events));
}

EventStream synth_events(const PlanarScene& scene, const BezierTrajectory& traj, const SynthConfig& cfg) {
  cfg.validate();
  const int steps = cfg.substep_count;
  std::vector<Image> frames;
  std::vector<double> times;
  frames.reserve(static_cast<std::size_t>(steps) + 1);
  const double t0 = static_cast<double>(traj.exposure.t_open);
  const double span = static_cast<double>(traj.exposure.duration());
  for (int k = 0; k <= steps; ++k) {
    const double tau = static_cast<double>(k) / steps;
    frames.push_back(render(scene, pose_at_tau(traj, tau)));
    times.push_back(t0 + tau * span);
  }
  return events_from_frames(frames, times, traj.exposure, scene.intensity_floor, cfg);
}

Image make_blob_texture(int width, int height, std::uint64_t seed, int blob_count) {
  Rng rng(derive_seed(seed, "texture"));
  Image tex(width, height);
  const double gx = uniform(rng, -0.15, 0.15);
  const double gy = uniform(rng, -0.15, 0.15);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      tex(x, y) = 0.45 + gx * (x / static_cast<double>(width) - 0.5) + gy * (y / static_cast<double>(height) - 0.5);
    }
  }
  for (int b = 0; b < blob_count; ++b) {
    const double cx = uniform(rng, 0.0, width);
    const double cy = uniform(rng, 0.0, height);
    const double sigma = uniform(rng, 2.0, 5.0);
    const double amp = uniform(rng, -0.35, 0.35);
    const int r = static_cast<int>(std::ceil(4.0 * sigma));
    for (int y = std::max(0, static_cast<int>(cy) - r); y < std::min(height, static_cast<int>(cy) + r + 1); ++y) {
      for (int x = std::max(0, static_cast<int>(cx) - r); x < std::min(width, static_cast<int>(cx) + r + 1); ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        tex(x, y) += amp * std::exp(-0.5 * d2 / (sigma * sigma));
      }
    }
  }
  for (double& v : tex.values()) v = 0.5 + 0.4 * std::tanh((v - 0.5) / 0.4);
  return tex;
}

}  // namespace evd
