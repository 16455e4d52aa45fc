#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "evdeblur/errors.hpp"
#include "evdeblur/optim.hpp"

namespace evd {
namespace {

double square_sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

ParamVector two_segments(std::span<const double> a, std::span<const double> b) {
  ParamVector p;
  p.add_segment("a", a, 0.1, GradientMode::finite_difference);
  p.add_segment("b", b, 0.01, GradientMode::reverse);
  return p;
}

TEST(Grad, SquareAtThreeIsSix) {
  ParamVector p;
  const std::vector<double> x{3.0};
  p.add_segment("x", x, 1.0, GradientMode::finite_difference);
  const auto g = grad(p, [](std::span<const double> v, std::vector<double>*) { return v[0] * v[0]; }, x);
  EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(Grad, LinearFunctionHasConstantGradient) {
  const std::vector<double> c{1.5, -2.0, 0.25};
  const auto f = [&](std::span<const double> v) { return c[0] * v[0] + c[1] * v[1] + c[2] * v[2]; };
  for (const std::vector<double>& at : {std::vector<double>{0, 0, 0}, std::vector<double>{10, -3, 7}}) {
    const auto g = numeric_gradient(f, at);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(g[k], c[k], 1e-8);
  }
}

TEST(Grad, MixesReverseAndFiniteDifferenceSegments) {
  const std::vector<double> a{1.0, -2.0}, b{0.5, 4.0};
  const ParamVector p = two_segments(a, b);
  std::vector<double> at{1.0, -2.0, 0.5, 4.0};
  const Objective obj = [](std::span<const double> x, std::vector<double>* rg) {
    if (rg) {
      rg->assign(x.size(), 0.0);
      (*rg)[2] = 2.0 * x[2];
      (*rg)[3] = 2.0 * x[3];
    }
    return square_sum(x);
  };
  const auto g = grad(p, obj, at);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(g[k], 2.0 * at[k], 1e-7);
}

TEST(Grad, NonFiniteObjectiveIsANumericError) {
  ParamVector p;
  const std::vector<double> x{1.0};
  p.add_segment("x", x, 1.0, GradientMode::finite_difference);
  const Objective bad = [](std::span<const double>, std::vector<double>*) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  EXPECT_THROW(grad(p, bad, x), NumericError);
}

TEST(GradCheck, QuadraticIsExact) {
  const std::vector<double> at{0.3, -1.2, 2.5, 0.0};
  std::vector<double> analytic;
  for (double v : at) analytic.push_back(2.0 * v);
  // Central differences are exact on quadratics for any step; a large step keeps roundoff below the bound.
  EXPECT_LT(grad_check(square_sum, analytic, at, 1e-3).max_relative_error, 1e-10);
}

TEST(GradCheck, DetectsSignFlip) {
  const std::vector<double> at{0.3, -1.2, 2.5};
  std::vector<double> flipped;
  for (double v : at) flipped.push_back(-2.0 * v);
  EXPECT_NEAR(grad_check(square_sum, flipped, at).max_relative_error, 2.0, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParametersAndAdvancesStep) {
  const std::vector<double> a{1.0, -2.0}, b{0.5, 4.0};
  ParamVector p = two_segments(a, b);
  const std::vector<double> before(p.values().begin(), p.values().end());
  AdamState st;
  adam_step(p, std::vector<double>(4, 0.0), st);
  EXPECT_EQ(st.step, 1u);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), p.values().begin()));
}

TEST(Adam, FirstStepMovesEachCoordinateByItsLearningRate) {
  const std::vector<double> a{1.0, -2.0}, b{0.5, 4.0};
  ParamVector p = two_segments(a, b);
  const std::vector<double> g{0.3, -7.0, 1e-3, -0.02};
  const std::vector<double> lr{0.1, 0.1, 0.01, 0.01};
  const std::vector<double> before(p.values().begin(), p.values().end());
  AdamState st;
  const AdamConfig cfg;
  adam_step(p, g, st, cfg);
  for (int k = 0; k < 4; ++k)
    EXPECT_NEAR(p.values()[k] - before[k], -lr[k] * g[k] / (std::abs(g[k]) + cfg.epsilon), 1e-12);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
  const auto run = [] {
    const std::vector<double> a{1.0, -2.0}, b{0.5, 4.0};
    ParamVector p = two_segments(a, b);
    AdamState st;
    std::vector<double> trace;
    for (int k = 0; k < 100; ++k) {
      std::vector<double> g;
      for (double v : p.values()) g.push_back(2.0 * v + std::sin(v * k));
      adam_step(p, g, st);
      trace.insert(trace.end(), p.values().begin(), p.values().end());
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(ParamVector, SegmentsAreAddressableByName) {
  const std::vector<double> a{1.0, -2.0}, b{0.5, 4.0};
  ParamVector p = two_segments(a, b);
  EXPECT_EQ(p.size(), 4u);
  EXPECT_EQ(p.segment("b").offset, 2u);
  EXPECT_EQ(p.segment_values("b")[1], 4.0);
  EXPECT_THROW(p.segment("c"), Error);
}

}  // namespace
}  // namespace evd
