#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "evdeblur/event_core.hpp"
#include "evdeblur/toyscene.hpp"

namespace evd {

/// Image of warped events.
struct WarpedAccumulation {
  ScalarMap map;
  Timestamp reference_time = 0;
  double variance = 0.0;
  std::size_t in_bounds = 0;
  std::size_t dropped = 0;
};

/// Moves every event in [window_begin, window_end) to x + (t_ref - t_k) u(x) and splats
/// theta * p bilinearly. Events landing outside the grid are dropped and counted.
WarpedAccumulation warp_events(const EventStream& stream, const FlowField& flow, Timestamp t_ref,
                               Timestamp window_begin, Timestamp window_end, double theta);

/// Fixed bilinear splat: value at source pixel i is distributed over up to four
/// destination pixels. Linear, so the adjoint is the matching gather.
class SplatPlan {
 public:
  SplatPlan() = default;
  /// Destination of pixel (x, y) is (x, y) + offset(x, y).
  SplatPlan(int width, int height, const ScalarMap& offset_x, const ScalarMap& offset_y);

  ScalarMap apply(const ScalarMap& source) const;
  ScalarMap adjoint(const ScalarMap& dest_grad) const;

 private:
  struct Tap {
    std::uint32_t dest;
    double weight;
  };
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> begin_;  // CSR offsets per source pixel
  std::vector<Tap> taps_;
};

/// Predicted log change -W(grad log C) . d over an interval of length dt, where d is the
/// flow displacement over dt and W splats the gradient forward along d.
class WarpedChangePredictor {
 public:
  WarpedChangePredictor() = default;
  WarpedChangePredictor(const FlowField& flow, Timestamp dt, double intensity_floor);

  ScalarMap predict(const Image& frame) const;
  /// d(loss)/d(frame) given d(loss)/d(prediction).
  Image adjoint(const Image& frame, const ScalarMap& grad_prediction) const;

 private:
  ScalarMap dx_;
  ScalarMap dy_;
  SplatPlan splat_;
  double floor_ = 1e-3;
};

ScalarMap warped_pred_change(const Image& frame, const FlowField& flow, Timestamp dt, double intensity_floor = 1e-3);

/// Central-difference gradient with one-sided differences at the border.
void image_gradient(const ScalarMap& m, ScalarMap& gx, ScalarMap& gy);

/// Uniform-flow contrast maximization: best grid candidate by warped-event variance,
/// refined once per axis by golden-section search. Candidates are displacements in
/// pixels over the window; ties go to the smaller displacement.
FlowField cm_flow_estimate(const EventStream& stream, Timestamp window_begin, Timestamp window_end,
                           std::span<const Eigen::Vector2d> search, double theta = 1.0);

/// Square grid of candidate displacements spaced `step` pixels apart, radius `extent`.
std::vector<Eigen::Vector2d> flow_search_grid(double extent, double step);

}  // namespace evd
