#include "evdeblur/geometry.hpp"

#include <cmath>
#include <numbers>

namespace evd {
namespace {

constexpr double kSmallAngle = 1e-6;
constexpr double kBranchMargin = 1e-6;

Matrix6d ad(const TangentVector& xi) {
  Matrix6d a = Matrix6d::Zero();
  const Eigen::Matrix3d w = skew(xi.omega);
  a.block<3, 3>(0, 0) = w;
  a.block<3, 3>(3, 0) = skew(xi.v);
  a.block<3, 3>(3, 3) = w;
  return a;
}

TangentVector scaled(const TangentVector& xi, double s) { return {xi.omega * s, xi.v * s}; }

}  // namespace

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

SE3Pose::SE3Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) : rotation(q.normalized()), translation(t) {}

SE3Pose SE3Pose::inverse() const {
  const Eigen::Quaterniond qi = rotation.conjugate();
  return {qi, -(qi * translation)};
}

SE3Pose SE3Pose::operator*(const SE3Pose& rhs) const {
  return {rotation * rhs.rotation, rotation * rhs.translation + translation};
}

Vector6d TangentVector::as_vector() const {
  Vector6d xi;
  xi << omega, v;
  return xi;
}

TangentVector TangentVector::from_vector(const Vector6d& xi) { return {xi.head<3>(), xi.tail<3>()}; }

SE3Pose se3_exp(const TangentVector& xi) {
  const double theta = xi.omega.norm();
  const Eigen::Matrix3d w = skew(xi.omega);
  const Eigen::Matrix3d w2 = w * w;
  double half_sinc;  // sin(theta/2)/theta
  double b;          // (1 - cos)/theta^2
  double c;          // (theta - sin)/theta^3
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    half_sinc = 0.5 - t2 / 48.0;
    b = 0.5 - t2 / 24.0;
    c = 1.0 / 6.0 - t2 / 120.0;
  } else {
    half_sinc = std::sin(0.5 * theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
    c = (theta - std::sin(theta)) / (theta * theta * theta);
  }
  const Eigen::Quaterniond q(std::cos(0.5 * theta), half_sinc * xi.omega.x(), half_sinc * xi.omega.y(),
                             half_sinc * xi.omega.z());
  const Eigen::Matrix3d V = Eigen::Matrix3d::Identity() + b * w + c * w2;
  return {q, V * xi.v};
}

TangentVector se3_log(const SE3Pose& pose) {
  Eigen::Quaterniond q = pose.rotation.normalized();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const double vec_norm = q.vec().norm();
  const double theta = 2.0 * std::atan2(vec_norm, q.w());
  if (theta >= std::numbers::pi - kBranchMargin) {
    throw BranchError("se3_log: rotation angle " + std::to_string(theta) + " too close to pi");
  }
  // omega = theta / sin(theta/2) * vec
  const double scale = vec_norm < 1e-12 ? 2.0 / q.w() : theta / vec_norm;
  TangentVector xi;
  xi.omega = scale * q.vec();
  const Eigen::Matrix3d w = skew(xi.omega);
  double d;  // (1 - theta sin / (2(1 - cos))) / theta^2
  if (theta < kSmallAngle) {
    d = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    d = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / (theta * theta);
  }
  const Eigen::Matrix3d V_inv = Eigen::Matrix3d::Identity() - 0.5 * w + d * w * w;
  xi.v = V_inv * pose.translation;
  return xi;
}

Matrix6d se3_adjoint(const SE3Pose& pose) {
  Matrix6d a = Matrix6d::Zero();
  const Eigen::Matrix3d R = pose.rotation_matrix();
  a.block<3, 3>(0, 0) = R;
  a.block<3, 3>(3, 0) = skew(pose.translation) * R;
  a.block<3, 3>(3, 3) = R;
  return a;
}

Matrix6d se3_right_jacobian(const TangentVector& xi) {
  // sum_k (-ad)^k / (k+1)!  -- entire series, 40 terms are ample for |omega| < pi.
  const Matrix6d m = -ad(xi);
  Matrix6d term = Matrix6d::Identity();
  Matrix6d acc = Matrix6d::Identity();
  for (int k = 1; k < 40; ++k) {
    term = term * m / static_cast<double>(k + 1);
    acc += term;
  }
  return acc;
}

BezierTrajectory BezierTrajectory::constant(const SE3Pose& pose, const ExposureWindow& exposure) {
  BezierTrajectory traj;
  traj.control_points.fill(pose);
  traj.exposure = exposure;
  return traj;
}

double bernstein8(int j, double tau) {
  static constexpr std::array<double, 9> binom{1, 8, 28, 56, 70, 56, 28, 8, 1};
  return binom[static_cast<std::size_t>(j)] * std::pow(1.0 - tau, 8 - j) * std::pow(tau, j);
}

double normalized_time(const ExposureWindow& exposure, Timestamp t) {
  if (!exposure.contains(t)) {
    throw RangeError("timestamp " + std::to_string(t) + " outside the exposure window");
  }
  return static_cast<double>(t - exposure.t_open) / static_cast<double>(exposure.duration());
}

SE3Pose pose_at_tau(const BezierTrajectory& traj, double tau) {
  SE3Pose p;
  for (int j = 0; j < kControlPoints; ++j) {
    const double w = bernstein8(j, tau);
    const TangentVector xi = se3_log(traj.control_points[static_cast<std::size_t>(j)]);
    if (w == 0.0) continue;
    p = p * se3_exp(scaled(xi, w));
  }
  return p;
}

SE3Pose pose_at(const BezierTrajectory& traj, Timestamp t) {
  return pose_at_tau(traj, normalized_time(traj.exposure, t));
}

std::array<Matrix6d, kControlPoints> pose_at_jacobian(const BezierTrajectory& traj, double tau) {
  std::array<TangentVector, kControlPoints> logs;
  std::array<double, kControlPoints> weights{};
  std::array<SE3Pose, kControlPoints> factors;
  for (std::size_t j = 0; j < kControlPoints; ++j) {
    logs[j] = se3_log(traj.control_points[j]);
    weights[j] = bernstein8(static_cast<int>(j), tau);
    factors[j] = se3_exp(scaled(logs[j], weights[j]));
  }
  std::array<Matrix6d, kControlPoints> jac;
  SE3Pose tail;  // F_{j+1} ... F_8
  for (int j = kControlPoints - 1; j >= 0; --j) {
    const auto u = static_cast<std::size_t>(j);
    const Matrix6d dlog = se3_right_jacobian(logs[u]).inverse();
    jac[u] = se3_adjoint(tail.inverse()) * se3_right_jacobian(scaled(logs[u], weights[u])) * weights[u] * dlog;
    tail = factors[u] * tail;
  }
  return jac;
}

PoseError pose_distance(const SE3Pose& a, const SE3Pose& b) {
  const Eigen::Quaterniond d = a.rotation.conjugate() * b.rotation;
  PoseError e;
  e.rot_err = 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
  e.trans_err = (a.translation - b.translation).norm();
  return e;
}

}  // namespace evd
