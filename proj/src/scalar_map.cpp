#include "evdeblur/scalar_map.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace evd {

ScalarMap::ScalarMap(int width, int height, double fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw DimensionError("negative map dimensions");
  }
  values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

void ScalarMap::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

ScalarMap& ScalarMap::operator+=(const ScalarMap& other) {
  require_same_shape(*this, other, "map addition");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ScalarMap& ScalarMap::operator-=(const ScalarMap& other) {
  require_same_shape(*this, other, "map subtraction");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ScalarMap& ScalarMap::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

ScalarMap operator+(ScalarMap a, const ScalarMap& b) { return a += b; }
ScalarMap operator-(ScalarMap a, const ScalarMap& b) { return a -= b; }
ScalarMap operator*(ScalarMap a, double s) { return a *= s; }
ScalarMap operator*(double s, ScalarMap a) { return a *= s; }

double sum(const ScalarMap& m) {
  double s = 0.0;
  for (double v : m.values()) s += v;
  return s;
}

double mean(const ScalarMap& m) { return m.empty() ? 0.0 : sum(m) / static_cast<double>(m.size()); }

double l2_norm(const ScalarMap& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const ScalarMap& m) {
  double r = 0.0;
  for (double v : m.values()) r = std::max(r, std::abs(v));
  return r;
}

double max_abs_diff(const ScalarMap& a, const ScalarMap& b) {
  require_same_shape(a, b, "max_abs_diff");
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(a[i] - b[i]));
  return r;
}

double population_variance(const ScalarMap& m) {
  if (m.empty()) return 0.0;
  const double mu = mean(m);
  double s = 0.0;
  for (double v : m.values()) s += (v - mu) * (v - mu);
  return s / static_cast<double>(m.size());
}

bool all_finite(const ScalarMap& m) {
  return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

double sample_bilinear(const ScalarMap& m, double x, double y, double outside) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  auto tap = [&](int xi, int yi) { return m.contains(xi, yi) ? m(xi, yi) : outside; };
  // Weights of exactly zero must not pull in out-of-grid taps at the far edge.
  const double top = ax == 0.0 ? tap(x0, y0) : (1.0 - ax) * tap(x0, y0) + ax * tap(x0 + 1, y0);
  if (ay == 0.0) return top;
  const double bottom = ax == 0.0 ? tap(x0, y0 + 1)
                                  : (1.0 - ax) * tap(x0, y0 + 1) + ax * tap(x0 + 1, y0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

void require_same_shape(const ScalarMap& a, const ScalarMap& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()));
  }
}

}  // namespace evd
