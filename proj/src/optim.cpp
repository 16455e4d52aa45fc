#include "evdeblur/optim.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "evdeblur/errors.hpp"

namespace evd {

void ParamVector::add_segment(std::string name, std::span<const double> values, double learning_rate,
                              GradientMode mode) {
  for (const Segment& s : segments_) {
    if (s.name == name) throw ParameterError(fmt::format("duplicate parameter segment '{}'", name));
  }
  if (!(learning_rate >= 0.0)) throw ParameterError("learning rate must be non-negative");
  segments_.push_back({std::move(name), values_.size(), values.size(), learning_rate, mode});
  values_.insert(values_.end(), values.begin(), values.end());
}

const Segment& ParamVector::segment(const std::string& name) const {
  for (const Segment& s : segments_) {
    if (s.name == name) return s;
  }
  throw ParameterError(fmt::format("no parameter segment '{}'", name));
}

std::span<double> ParamVector::segment_values(const std::string& name) {
  const Segment& s = segment(name);
  return std::span<double>(values_).subspan(s.offset, s.size);
}

std::span<const double> ParamVector::segment_values(const std::string& name) const {
  const Segment& s = segment(name);
  return std::span<const double>(values_).subspan(s.offset, s.size);
}

std::vector<double> grad(const ParamVector& layout, const Objective& objective, std::span<const double> at,
                         double fd_step) {
  if (at.size() != layout.size()) throw DimensionError("gradient point does not match the parameter layout");
  std::vector<double> out(at.size(), 0.0);
  bool any_reverse = false;
  for (const Segment& s : layout.segments()) any_reverse |= s.mode == GradientMode::reverse && s.size > 0;
  std::vector<double> reverse;
  const double f0 = objective(at, any_reverse ? &reverse : nullptr);
  if (!std::isfinite(f0)) throw NumericError("objective is not finite at the current parameters");
  std::vector<double> x(at.begin(), at.end());
  for (const Segment& s : layout.segments()) {
    if (s.mode == GradientMode::reverse) {
      if (reverse.size() != at.size()) throw DimensionError("objective returned a gradient of the wrong size");
      std::copy_n(reverse.begin() + static_cast<std::ptrdiff_t>(s.offset), s.size,
                  out.begin() + static_cast<std::ptrdiff_t>(s.offset));
      continue;
    }
    for (std::size_t k = s.offset; k < s.offset + s.size; ++k) {
      const double keep = x[k];
      x[k] = keep + fd_step;
      const double fp = objective(x, nullptr);
      x[k] = keep - fd_step;
      const double fm = objective(x, nullptr);
      x[k] = keep;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError(fmt::format("objective is not finite when probing {}[{}]", s.name, k - s.offset));
      }
      out[k] = (fp - fm) / (2.0 * fd_step);
    }
  }
  return out;
}

std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> at, double step) {
  std::vector<double> x(at.begin(), at.end());
  std::vector<double> g(at.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double keep = x[k];
    x[k] = keep + step;
    const double fp = f(x);
    x[k] = keep - step;
    const double fm = f(x);
    x[k] = keep;
    g[k] = (fp - fm) / (2.0 * step);
  }
  return g;
}

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> analytic, std::span<const double> at, double eps, double floor) {
  if (analytic.size() != at.size()) throw DimensionError("analytic gradient size does not match the point");
  const std::vector<double> numeric = numeric_gradient(f, at, eps);
  GradCheckResult r;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric[k]), floor});
    const double err = std::abs(analytic[k] - numeric[k]) / denom;
    if (k == 0 || err > r.max_relative_error) r = {err, k, analytic[k], numeric[k]};
  }
  return r;
}

void adam_step(ParamVector& params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
  const std::size_t n = params.size();
  if (grads.size() != n) throw DimensionError("gradient size does not match the parameters");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n || state.v.size() != n) throw DimensionError("Adam moments do not match the parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::span<double> x = params.values();
  for (const Segment& s : params.segments()) {
    for (std::size_t k = s.offset; k < s.offset + s.size; ++k) {
      state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
      state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grads[k] * grads[k];
      const double mhat = state.m[k] / c1;
      const double vhat = state.v[k] / c2;
      x[k] -= s.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

}  // namespace evd
