#pragma once

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "evdeblur/event_core.hpp"

namespace evd {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Rigid transform; the quaternion is kept at unit norm.
struct SE3Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  SE3Pose() = default;
  SE3Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);

  static SE3Pose identity() { return {}; }

  Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }
  SE3Pose inverse() const;
  SE3Pose operator*(const SE3Pose& rhs) const;
};

/// Lie-algebra coordinates, rotation first.
struct TangentVector {
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();

  Vector6d as_vector() const;
  static TangentVector from_vector(const Vector6d& xi);
};

SE3Pose se3_exp(const TangentVector& xi);

/// Principal-branch logarithm. Throws BranchError when the rotation angle is
/// within 1e-6 of pi.
TangentVector se3_log(const SE3Pose& pose);

/// Adjoint of a pose acting on (omega, v) tangent coordinates.
Matrix6d se3_adjoint(const SE3Pose& pose);

/// Right Jacobian: exp(xi + d) ~= exp(xi) * exp(J_r(xi) d).
Matrix6d se3_right_jacobian(const TangentVector& xi);

inline constexpr int kControlPoints = 9;

/// Degree-8 Bezier curve on SE(3) over an exposure window.
struct BezierTrajectory {
  std::array<SE3Pose, kControlPoints> control_points;
  ExposureWindow exposure;

  /// All nine control points at the same pose.
  static BezierTrajectory constant(const SE3Pose& pose, const ExposureWindow& exposure);
};

/// Bernstein weight C(8,j) (1-tau)^(8-j) tau^j.
double bernstein8(int j, double tau);

/// Normalized time tau = (t - t_open) / T. Throws RangeError outside the exposure.
double normalized_time(const ExposureWindow& exposure, Timestamp t);

/// P(t) = prod_j exp(B_j(tau) log T_j), composed left to right in ascending j.
SE3Pose pose_at(const BezierTrajectory& traj, Timestamp t);
SE3Pose pose_at_tau(const BezierTrajectory& traj, double tau);

/// Jacobians of pose_at under right perturbations: if every control point moves
/// to T_j exp(eta_j), then P moves to P exp(sum_j J_j eta_j) to first order.
std::array<Matrix6d, kControlPoints> pose_at_jacobian(const BezierTrajectory& traj, double tau);

struct PoseError {
  double rot_err = 0.0;    ///< geodesic angle, radians
  double trans_err = 0.0;  ///< Euclidean distance, scene units
};

PoseError pose_distance(const SE3Pose& a, const SE3Pose& b);

Eigen::Matrix3d skew(const Eigen::Vector3d& w);

}  // namespace evd
