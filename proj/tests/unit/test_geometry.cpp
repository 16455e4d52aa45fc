#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "evdeblur/geometry.hpp"
#include "evdeblur/random.hpp"

namespace evd {
namespace {

TangentVector random_tangent(Rng& rng, double max_angle, double max_trans) {
  TangentVector xi;
  Eigen::Vector3d axis(normal01(rng), normal01(rng), normal01(rng));
  xi.omega = axis.normalized() * uniform(rng, 0.0, max_angle);
  xi.v = Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)) * max_trans;
  return xi;
}

Eigen::Matrix4d as_matrix(const SE3Pose& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = p.rotation_matrix();
  m.topRightCorner<3, 1>() = p.translation;
  return m;
}

// Truncated power series of the 4x4 twist matrix.
Eigen::Matrix4d series_exp(const TangentVector& xi) {
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  a.topLeftCorner<3, 3>() = skew(xi.omega);
  a.topRightCorner<3, 1>() = xi.v;
  Eigen::Matrix4d term = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d total = term;
  for (int k = 1; k < 60; ++k) {
    term = term * a / k;
    total += term;
  }
  return total;
}

double pose_gap(const SE3Pose& a, const SE3Pose& b) { return (as_matrix(a) - as_matrix(b)).cwiseAbs().maxCoeff(); }

BezierTrajectory random_trajectory(Rng& rng) {
  BezierTrajectory traj = BezierTrajectory::constant(SE3Pose::identity(), ExposureWindow(0, 1'000'000));
  for (auto& cp : traj.control_points) cp = se3_exp(random_tangent(rng, 0.5, 0.3));
  return traj;
}

TEST(Se3Exp, ZeroIsIdentity) { EXPECT_LT(pose_gap(se3_exp({}), SE3Pose::identity()), 1e-15); }

TEST(Se3Exp, QuarterTurnAboutZ) {
  TangentVector xi;
  xi.omega = {0, 0, std::numbers::pi / 2};
  const SE3Pose p = se3_exp(xi);
  Eigen::Matrix3d expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((p.rotation_matrix() - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT(p.translation.norm(), 1e-15);
}

TEST(Se3Exp, MatchesMatrixPowerSeries) {
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const TangentVector xi = random_tangent(rng, 3.0, 2.0);
    EXPECT_LT((as_matrix(se3_exp(xi)) - series_exp(xi)).cwiseAbs().maxCoeff(), 1e-10);
  }
  TangentVector tiny;
  tiny.omega = {3e-8, -1e-8, 2e-8};
  tiny.v = {0.1, 0.2, -0.3};
  EXPECT_LT((as_matrix(se3_exp(tiny)) - series_exp(tiny)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Se3Log, IdentityAndRoundTrip) {
  EXPECT_LT(se3_log(SE3Pose::identity()).as_vector().norm(), 1e-15);
  Rng rng(4);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const TangentVector xi = random_tangent(rng, 3.0, 2.0);
    worst = std::max(worst, (se3_log(se3_exp(xi)).as_vector() - xi.as_vector()).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Se3Log, NearHalfTurnIsBranchError) {
  TangentVector xi;
  xi.omega = {0, 0, std::numbers::pi - 1e-8};
  EXPECT_THROW(se3_log(se3_exp(xi)), BranchError);
}

TEST(PoseAt, EndpointsAreFirstAndLastControlPoints) {
  Rng rng(5);
  const BezierTrajectory traj = random_trajectory(rng);
  EXPECT_LT(pose_gap(pose_at(traj, traj.exposure.t_open), traj.control_points.front()), 1e-12);
  EXPECT_LT(pose_gap(pose_at(traj, traj.exposure.t_close), traj.control_points.back()), 1e-12);
}

TEST(PoseAt, IdenticalControlPointsGiveConstantPose) {
  Rng rng(6);
  const SE3Pose q = se3_exp(random_tangent(rng, 1.0, 1.0));
  const BezierTrajectory traj = BezierTrajectory::constant(q, ExposureWindow(0, 1000));
  for (Timestamp t = 0; t <= 1000; t += 50) EXPECT_LT(pose_gap(pose_at(traj, t), q), 1e-12);
}

TEST(PoseAt, FollowsTheProductFormulaInAscendingOrder) {
  Rng rng(7);
  const BezierTrajectory traj = random_trajectory(rng);
  const double tau = 0.37;
  Eigen::Matrix4d expected = Eigen::Matrix4d::Identity();
  for (int j = 0; j < kControlPoints; ++j) {
    const double w = std::tgamma(9.0) / (std::tgamma(j + 1.0) * std::tgamma(9.0 - j)) * std::pow(1 - tau, 8 - j) *
                     std::pow(tau, j);
    const Vector6d xi = se3_log(traj.control_points[j]).as_vector() * w;
    expected = expected * series_exp(TangentVector::from_vector(xi));
  }
  EXPECT_LT((as_matrix(pose_at_tau(traj, tau)) - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PoseAt, OutsideExposureIsRangeError) {
  const BezierTrajectory traj = BezierTrajectory::constant(SE3Pose::identity(), ExposureWindow(100, 200));
  EXPECT_THROW(pose_at(traj, 99), RangeError);
  EXPECT_THROW(pose_at(traj, 201), RangeError);
}

TEST(PoseAt, ContinuousInTime) {
  Rng rng(8);
  const BezierTrajectory traj = random_trajectory(rng);
  double previous = 1.0;
  for (Timestamp dt : {100000, 10000, 1000, 100, 10}) {
    const PoseError e = pose_distance(pose_at(traj, 400000), pose_at(traj, 400000 + dt));
    const double d = e.rot_err + e.trans_err;
    EXPECT_LT(d, previous);
    previous = d;
  }
  EXPECT_LT(previous, 1e-4);
}

TEST(PoseAtJacobian, MatchesFiniteDifferences) {
  Rng rng(9);
  const BezierTrajectory traj = random_trajectory(rng);
  const double h = 1e-6;
  for (double tau : {0.0, 0.3, 0.71, 1.0}) {
    const auto jac = pose_at_jacobian(traj, tau);
    const SE3Pose base = pose_at_tau(traj, tau);
    for (int j = 0; j < kControlPoints; ++j) {
      Matrix6d numeric;
      for (int k = 0; k < 6; ++k) {
        Vector6d d = Vector6d::Zero();
        d[k] = h;
        BezierTrajectory plus = traj, minus = traj;
        plus.control_points[j] = traj.control_points[j] * se3_exp(TangentVector::from_vector(d));
        minus.control_points[j] = traj.control_points[j] * se3_exp(TangentVector::from_vector(-d));
        const Vector6d a = se3_log(base.inverse() * pose_at_tau(plus, tau)).as_vector();
        const Vector6d b = se3_log(base.inverse() * pose_at_tau(minus, tau)).as_vector();
        numeric.col(k) = (a - b) / (2 * h);
      }
      const double scale = std::max(1e-6, numeric.cwiseAbs().maxCoeff());
      EXPECT_LT((jac[j] - numeric).cwiseAbs().maxCoeff() / scale, 1e-4) << "tau " << tau << " control point " << j;
    }
  }
}

TEST(PoseDistance, KnownCasesAndQuaternionFormula) {
  const PoseError same = pose_distance(SE3Pose::identity(), SE3Pose::identity());
  EXPECT_EQ(same.rot_err, 0.0);
  EXPECT_EQ(same.trans_err, 0.0);
  TangentVector xi;
  xi.omega = {0, 0, std::numbers::pi / 2};
  EXPECT_NEAR(pose_distance(se3_exp(xi), SE3Pose::identity()).rot_err, std::numbers::pi / 2, 1e-12);
  Rng rng(10);
  for (int k = 0; k < 50; ++k) {
    const SE3Pose a = se3_exp(random_tangent(rng, 3.0, 1.0));
    const SE3Pose b = se3_exp(random_tangent(rng, 3.0, 1.0));
    const double dot = std::min(1.0, std::abs(a.rotation.coeffs().dot(b.rotation.coeffs())));
    const PoseError e = pose_distance(a, b);
    EXPECT_NEAR(e.rot_err, 2.0 * std::acos(dot), 1e-7);
    EXPECT_NEAR(e.trans_err, (a.translation - b.translation).norm(), 1e-14);
  }
}

TEST(SE3Pose, CompositionKeepsUnitQuaternion) {
  Rng rng(11);
  SE3Pose p;
  for (int k = 0; k < 1000; ++k) p = p * se3_exp(random_tangent(rng, 0.5, 0.1));
  EXPECT_NEAR(p.rotation.norm(), 1.0, 1e-9);
}

}  // namespace
}  // namespace evd
