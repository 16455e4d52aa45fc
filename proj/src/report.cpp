#include "evdeblur/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <fmt/format.h>

namespace evd {
namespace {

constexpr int kTicks = 5;
constexpr int kTickLength = 4;

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool valid() const { return lo <= hi; }
  // Degenerate spans are widened so the mapping stays finite.
  void pad() {
    if (!valid()) {
      lo = 0.0;
      hi = 1.0;
    } else if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

std::optional<double> axis_value(double y, bool log_y) {
  if (!std::isfinite(y)) return std::nullopt;
  if (!log_y) return y;
  if (y <= 0.0) return std::nullopt;
  return std::log10(y);
}

void put(Image& img, int x, int y, double v) {
  if (img.contains(x, y)) img(x, y) = v;
}

class Pen {
 public:
  Pen(Image& img, double shade, int dash) : img_(img), shade_(shade), dash_(dash) {}

  // Bresenham; the dash phase carries across segments.
  void line(int x0, int y0, int x1, int y1) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      if (dash_ == 0 || (phase_ / dash_) % 2 == 0) put(img_, x0, y0, shade_);
      ++phase_;
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

 private:
  Image& img_;
  double shade_;
  int dash_;
  int phase_ = 0;
};

}  // namespace

Image plot_curves(std::span<const Curve> curves, const PlotStyle& style) {
  if (style.width < 4 * style.margin || style.height < 4 * style.margin || style.margin < kTickLength)
    throw ParameterError(fmt::format("plot canvas {}x{} too small for margin {}", style.width, style.height,
                                     style.margin));
  Range xr, yr;
  for (const Curve& c : curves) {
    if (c.x.size() != c.y.size()) throw DimensionError("curve x and y lengths differ");
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      const auto y = axis_value(c.y[i], style.log_y);
      if (!y || !std::isfinite(c.x[i])) continue;
      xr.add(c.x[i]);
      yr.add(*y);
    }
  }
  xr.pad();
  yr.pad();

  Image img(style.width, style.height, 1.0);
  const int left = style.margin;
  const int right = style.width - 1 - style.margin;
  const int top = style.margin;
  const int bottom = style.height - 1 - style.margin;

  Pen frame(img, 0.0, 0);
  frame.line(left, top, right, top);
  frame.line(right, top, right, bottom);
  frame.line(right, bottom, left, bottom);
  frame.line(left, bottom, left, top);
  for (int k = 0; k <= kTicks; ++k) {
    const int px = left + (right - left) * k / kTicks;
    const int py = bottom - (bottom - top) * k / kTicks;
    frame.line(px, bottom, px, bottom + kTickLength);
    frame.line(left - kTickLength, py, left, py);
  }

  const auto to_px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * (right - left); };
  const auto to_py = [&](double y) { return bottom - (y - yr.lo) / (yr.hi - yr.lo) * (bottom - top); };
  for (const Curve& c : curves) {
    Pen pen(img, c.shade, c.dash);
    std::optional<std::pair<int, int>> prev;
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      const auto y = axis_value(c.y[i], style.log_y);
      if (!y || !std::isfinite(c.x[i])) {
        prev.reset();
        continue;
      }
      const std::pair<int, int> cur{static_cast<int>(std::lround(to_px(c.x[i]))),
                                    static_cast<int>(std::lround(to_py(*y)))};
      if (prev)
        pen.line(prev->first, prev->second, cur.first, cur.second);
      else
        pen.line(cur.first, cur.second, cur.first, cur.second);
      prev = cur;
    }
  }
  return img;
}

Image image_grid(std::span<const Image> tiles, int gap, double gap_value) {
  if (tiles.empty()) throw ParameterError("image grid needs at least one tile");
  if (gap < 0) throw ParameterError("image grid gap must be non-negative");
  const int h = tiles.front().height();
  int w = gap * static_cast<int>(tiles.size() - 1);
  for (const Image& t : tiles) {
    if (t.height() != h) throw DimensionError("image grid tiles must share a height");
    w += t.width();
  }
  Image out(w, h, gap_value);
  int x0 = 0;
  for (const Image& t : tiles) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < t.width(); ++x) out(x0 + x, y) = t(x, y);
    x0 += t.width() + gap;
  }
  return out;
}

}  // namespace evd
