#include "evdeblur/warp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace evd {
namespace {

struct BilinearTaps {
  int x0, y0;
  double ax, ay;
};

bool inside_grid(double x, double y, int width, int height) {
  return x >= 0.0 && y >= 0.0 && x <= width - 1 && y <= height - 1;
}

template <class Fn>
void for_each_tap(const BilinearTaps& b, int width, int height, Fn&& fn) {
  const double w[4] = {(1 - b.ax) * (1 - b.ay), b.ax * (1 - b.ay), (1 - b.ax) * b.ay, b.ax * b.ay};
  const int xs[4] = {b.x0, b.x0 + 1, b.x0, b.x0 + 1};
  const int ys[4] = {b.y0, b.y0, b.y0 + 1, b.y0 + 1};
  for (int k = 0; k < 4; ++k) {
    if (w[k] == 0.0) continue;
    if (xs[k] < 0 || ys[k] < 0 || xs[k] >= width || ys[k] >= height) continue;
    fn(xs[k], ys[k], w[k]);
  }
}

BilinearTaps taps_at(double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  return {static_cast<int>(fx), static_cast<int>(fy), x - fx, y - fy};
}

double warped_variance(const EventStream& stream, Timestamp a, Timestamp b, const Eigen::Vector2d& d, double theta) {
  const FlowField flow = FlowField::uniform(stream.width(), stream.height(), d.x(), d.y(), b - a);
  return warp_events(stream, flow, b, a, b, theta).variance;
}

}  // namespace

WarpedAccumulation warp_events(const EventStream& stream, const FlowField& flow, Timestamp t_ref,
                               Timestamp window_begin, Timestamp window_end, double theta) {
  if (!(theta > 0.0)) throw ParameterError("contrast threshold must be positive");
  if (flow.width() != stream.width() || flow.height() != stream.height()) {
    throw DimensionError("flow field and event sensor sizes differ");
  }
  stream.require_in_range(window_begin, "warp_events");
  stream.require_in_range(window_end, "warp_events");
  WarpedAccumulation r;
  r.reference_time = t_ref;
  r.map = ScalarMap(stream.width(), stream.height());
  const double inv_interval = 1.0 / static_cast<double>(flow.interval);
  for (const Event& e : stream.slice(window_begin, window_end)) {
    const double dt = static_cast<double>(t_ref - e.t) * inv_interval;
    const double x = e.x + dt * flow.u(e.x, e.y);
    const double y = e.y + dt * flow.v(e.x, e.y);
    if (!inside_grid(x, y, stream.width(), stream.height())) {
      ++r.dropped;
      continue;
    }
    ++r.in_bounds;
    const double value = theta * e.p;
    for_each_tap(taps_at(x, y), stream.width(), stream.height(),
                 [&](int xi, int yi, double w) { r.map(xi, yi) += w * value; });
  }
  r.variance = population_variance(r.map);
  return r;
}

SplatPlan::SplatPlan(int width, int height, const ScalarMap& offset_x, const ScalarMap& offset_y)
    : width_(width), height_(height) {
  begin_.reserve(static_cast<std::size_t>(width) * height + 1);
  begin_.push_back(0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double tx = x + offset_x(x, y);
      const double ty = y + offset_y(x, y);
      if (inside_grid(tx, ty, width, height)) {
        for_each_tap(taps_at(tx, ty), width, height, [&](int xi, int yi, double w) {
          taps_.push_back({static_cast<std::uint32_t>(yi * width + xi), w});
        });
      }
      begin_.push_back(static_cast<std::uint32_t>(taps_.size()));
    }
  }
}

ScalarMap SplatPlan::apply(const ScalarMap& source) const {
  ScalarMap out(width_, height_);
  for (std::size_t i = 0; i + 1 < begin_.size(); ++i) {
    const double v = source[i];
    for (std::uint32_t k = begin_[i]; k < begin_[i + 1]; ++k) out[taps_[k].dest] += taps_[k].weight * v;
  }
  return out;
}

ScalarMap SplatPlan::adjoint(const ScalarMap& dest_grad) const {
  ScalarMap out(width_, height_);
  for (std::size_t i = 0; i + 1 < begin_.size(); ++i) {
    double acc = 0.0;
    for (std::uint32_t k = begin_[i]; k < begin_[i + 1]; ++k) acc += taps_[k].weight * dest_grad[taps_[k].dest];
    out[i] = acc;
  }
  return out;
}

void image_gradient(const ScalarMap& m, ScalarMap& gx, ScalarMap& gy) {
  const int w = m.width();
  const int h = m.height();
  gx = ScalarMap(w, h);
  gy = ScalarMap(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
      const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
      gx(x, y) = xr > xl ? (m(xr, y) - m(xl, y)) / (xr - xl) : 0.0;
      gy(x, y) = yd > yu ? (m(x, yd) - m(x, yu)) / (yd - yu) : 0.0;
    }
  }
}

namespace {

// Adjoint of image_gradient.
ScalarMap image_gradient_adjoint(const ScalarMap& ggx, const ScalarMap& ggy) {
  const int w = ggx.width();
  const int h = ggx.height();
  ScalarMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
      const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
      if (xr > xl) {
        const double g = ggx(x, y) / (xr - xl);
        out(xr, y) += g;
        out(xl, y) -= g;
      }
      if (yd > yu) {
        const double g = ggy(x, y) / (yd - yu);
        out(x, yd) += g;
        out(x, yu) -= g;
      }
    }
  }
  return out;
}

}  // namespace

WarpedChangePredictor::WarpedChangePredictor(const FlowField& flow, Timestamp dt, double intensity_floor)
    : dx_(flow.width(), flow.height()), dy_(flow.width(), flow.height()), floor_(intensity_floor) {
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      const Eigen::Vector2d d = flow.displacement(x, y, static_cast<double>(dt));
      dx_(x, y) = d.x();
      dy_(x, y) = d.y();
    }
  }
  splat_ = SplatPlan(flow.width(), flow.height(), dx_, dy_);
}

ScalarMap WarpedChangePredictor::predict(const Image& frame) const {
  require_same_shape(frame, dx_, "warped change prediction");
  ScalarMap log_frame(frame.width(), frame.height());
  for (std::size_t i = 0; i < frame.size(); ++i) log_frame[i] = std::log(frame[i] + floor_);
  ScalarMap gx, gy;
  image_gradient(log_frame, gx, gy);
  const ScalarMap wx = splat_.apply(gx);
  const ScalarMap wy = splat_.apply(gy);
  ScalarMap out(frame.width(), frame.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -(wx[i] * dx_[i] + wy[i] * dy_[i]);
  return out;
}

Image WarpedChangePredictor::adjoint(const Image& frame, const ScalarMap& grad_prediction) const {
  ScalarMap gwx(frame.width(), frame.height());
  ScalarMap gwy(frame.width(), frame.height());
  for (std::size_t i = 0; i < gwx.size(); ++i) {
    gwx[i] = -grad_prediction[i] * dx_[i];
    gwy[i] = -grad_prediction[i] * dy_[i];
  }
  ScalarMap g_log = image_gradient_adjoint(splat_.adjoint(gwx), splat_.adjoint(gwy));
  for (std::size_t i = 0; i < g_log.size(); ++i) g_log[i] /= frame[i] + floor_;
  return g_log;
}

ScalarMap warped_pred_change(const Image& frame, const FlowField& flow, Timestamp dt, double intensity_floor) {
  return WarpedChangePredictor(flow, dt, intensity_floor).predict(frame);
}

std::vector<Eigen::Vector2d> flow_search_grid(double extent, double step) {
  if (!(step > 0.0) || extent < 0.0) throw ParameterError("flow search grid needs step > 0 and extent >= 0");
  std::vector<Eigen::Vector2d> grid;
  const int n = static_cast<int>(std::floor(extent / step + 1e-9));
  for (int j = -n; j <= n; ++j) {
    for (int i = -n; i <= n; ++i) grid.emplace_back(i * step, j * step);
  }
  return grid;
}

FlowField cm_flow_estimate(const EventStream& stream, Timestamp window_begin, Timestamp window_end,
                           std::span<const Eigen::Vector2d> search, double theta) {
  if (search.empty()) throw ParameterError("flow search grid is empty");
  if (window_end <= window_begin) throw RangeError("flow estimation window is empty");
  stream.require_in_range(window_begin, "cm_flow_estimate");
  stream.require_in_range(window_end, "cm_flow_estimate");

  auto better = [](double score, double norm, double best_score, double best_norm) {
    const double tol = 1e-12 * std::max(1.0, std::abs(best_score));
    if (score > best_score + tol) return true;
    return std::abs(score - best_score) <= tol && norm < best_norm;
  };

  Eigen::Vector2d best = search.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (const Eigen::Vector2d& d : search) {
    const double s = warped_variance(stream, window_begin, window_end, d, theta);
    if (better(s, d.norm(), best_score, best.norm())) {
      best = d;
      best_score = s;
    }
  }

  for (int axis = 0; axis < 2; ++axis) {
    double spacing = std::numeric_limits<double>::infinity();
    for (const Eigen::Vector2d& d : search) {
      const double gap = std::abs(d[axis] - best[axis]);
      if (gap > 1e-12) spacing = std::min(spacing, gap);
    }
    if (!std::isfinite(spacing)) continue;
    auto eval = [&](double c) {
      Eigen::Vector2d d = best;
      d[axis] = c;
      return warped_variance(stream, window_begin, window_end, d, theta);
    };
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = best[axis] - spacing;
    double hi = best[axis] + spacing;
    double c1 = hi - ratio * (hi - lo);
    double c2 = lo + ratio * (hi - lo);
    double f1 = eval(c1);
    double f2 = eval(c2);
    for (int it = 0; it < 40; ++it) {
      if (f1 >= f2) {
        hi = c2;
        c2 = c1;
        f2 = f1;
        c1 = hi - ratio * (hi - lo);
        f1 = eval(c1);
      } else {
        lo = c1;
        c1 = c2;
        f1 = f2;
        c2 = lo + ratio * (hi - lo);
        f2 = eval(c2);
      }
    }
    const double c = 0.5 * (lo + hi);
    const double fc = eval(c);
    if (fc > best_score) {
      best[axis] = c;
      best_score = fc;
    }
  }
  return FlowField::uniform(stream.width(), stream.height(), best.x(), best.y(), window_end - window_begin);
}

}  // namespace evd
