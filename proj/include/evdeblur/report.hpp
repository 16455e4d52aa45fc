#pragma once

#include <span>
#include <vector>

#include "evdeblur/scalar_map.hpp"

namespace evd {

struct Curve {
  std::vector<double> x;
  std::vector<double> y;
  double shade = 0.0;  ///< gray level of the polyline, 0 black
  int dash = 0;        ///< on/off run length in pixels, 0 for a solid line
};

struct PlotStyle {
  int width = 480;
  int height = 320;
  int margin = 16;
  bool log_y = false;
};

/// Rasterizes curves onto a white canvas with a framed plot area and tick marks.
/// Non-finite points (and non-positive ones on a log axis) break the polyline.
Image plot_curves(std::span<const Curve> curves, const PlotStyle& style = {});

/// Side-by-side tiles of equal height separated by `gap` columns of `gap_value`.
Image image_grid(std::span<const Image> tiles, int gap = 4, double gap_value = 1.0);

}  // namespace evd
