#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evdeblur/errors.hpp"

namespace evd {

/// Row-major grid of doubles. Used for intensity images, log-change maps and
/// accumulation maps alike.
class ScalarMap {
 public:
  ScalarMap() = default;
  ScalarMap(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(int x, int y) { return values_[index(x, y)]; }
  double operator()(int x, int y) const { return values_[index(x, y)]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool same_shape(const ScalarMap& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  void fill(double v);

  ScalarMap& operator+=(const ScalarMap& other);
  ScalarMap& operator-=(const ScalarMap& other);
  ScalarMap& operator*=(double s);

  friend bool operator==(const ScalarMap&, const ScalarMap&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

using Image = ScalarMap;

ScalarMap operator+(ScalarMap a, const ScalarMap& b);
ScalarMap operator-(ScalarMap a, const ScalarMap& b);
ScalarMap operator*(ScalarMap a, double s);
ScalarMap operator*(double s, ScalarMap a);

double sum(const ScalarMap& m);
double mean(const ScalarMap& m);
double l2_norm(const ScalarMap& m);
double max_abs(const ScalarMap& m);
double max_abs_diff(const ScalarMap& a, const ScalarMap& b);
/// Population variance over every pixel (zeros included).
double population_variance(const ScalarMap& m);
bool all_finite(const ScalarMap& m);

/// Bilinear sample with a constant value for taps that fall outside the grid.
double sample_bilinear(const ScalarMap& m, double x, double y, double outside);

void require_same_shape(const ScalarMap& a, const ScalarMap& b, const char* what);

}  // namespace evd
