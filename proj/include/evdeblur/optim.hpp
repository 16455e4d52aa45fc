#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace evd {

enum class GradientMode { reverse, finite_difference };

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  double learning_rate = 1e-3;
  GradientMode mode = GradientMode::finite_difference;
};

/// Flat parameter vector partitioned into named segments.
class ParamVector {
 public:
  /// Appends a segment holding a copy of `values`.
  void add_segment(std::string name, std::span<const double> values, double learning_rate, GradientMode mode);

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(const std::string& name) const;
  std::span<double> segment_values(const std::string& name);
  std::span<const double> segment_values(const std::string& name) const;

 private:
  std::vector<double> values_;
  std::vector<Segment> segments_;
};

/// Value of the objective; if `reverse_grad` is non-null the objective writes the full-size
/// gradient for every reverse-mode segment into it (other entries are ignored).
using Objective = std::function<double(std::span<const double> x, std::vector<double>* reverse_grad)>;

inline constexpr double kFiniteDifferenceStep = 1e-6;

/// Gradient using each segment's registered mode: reverse-mode partials from the objective,
/// central differences elsewhere. Throws NumericError on a non-finite objective.
std::vector<double> grad(const ParamVector& layout, const Objective& objective, std::span<const double> at,
                         double fd_step = kFiniteDifferenceStep);

/// Central-difference gradient of a plain function over every coordinate.
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> at, double step = kFiniteDifferenceStep);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> analytic, std::span<const double> at,
                           double eps = kFiniteDifferenceStep, double floor = 1e-6);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam with the learning rate of each parameter's segment.
void adam_step(ParamVector& params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg = {});

}  // namespace evd
