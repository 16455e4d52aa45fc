#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evdeblur/errors.hpp"
#include "evdeblur/scalar_map.hpp"

namespace evd {

struct Event {
  Timestamp t = 0;
  int x = 0;
  int y = 0;
  int p = 1;  ///< +1 or -1

  friend bool operator==(const Event&, const Event&) = default;
};

struct ExposureWindow {
  Timestamp t_open = 0;
  Timestamp t_close = 1;

  ExposureWindow() = default;
  ExposureWindow(Timestamp open, Timestamp close);

  Timestamp duration() const { return t_close - t_open; }
  bool contains(Timestamp t) const { return t >= t_open && t <= t_close; }

  friend bool operator==(const ExposureWindow&, const ExposureWindow&) = default;
};

/// Time-ordered polarity events on a fixed sensor grid covering [t_start, t_end].
class EventStream {
 public:
  EventStream() = default;
  /// Validates sortedness, pixel bounds, polarity and time coverage.
  EventStream(int width, int height, Timestamp t_start, Timestamp t_end, std::vector<Event> events = {});

  /// Sorts by timestamp (stable, so equal-time events keep their input order) before validating.
  static EventStream from_unsorted(int width, int height, Timestamp t_start, Timestamp t_end,
                                   std::vector<Event> events);

  int width() const { return width_; }
  int height() const { return height_; }
  Timestamp t_start() const { return t_start_; }
  Timestamp t_end() const { return t_end_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  const std::vector<Event>& events() const { return events_; }

  /// Events with timestamp in the half-open window [a, b).
  std::span<const Event> slice(Timestamp a, Timestamp b) const;

  /// Throws RangeError unless t lies within [t_start, t_end].
  void require_in_range(Timestamp t, const char* what) const;

  friend bool operator==(const EventStream&, const EventStream&) = default;

 private:
  int width_ = 1;
  int height_ = 1;
  Timestamp t_start_ = 0;
  Timestamp t_end_ = 0;
  std::vector<Event> events_;
};

/// Signed per-pixel polarity sum over [min(f,t), max(f,t)), negated when f > t.
ScalarMap accumulate(const EventStream& stream, Timestamp f, Timestamp t);

/// theta * accumulate(stream, f, t): the log-brightness change L(t) - L(f).
ScalarMap delta_log(const EventStream& stream, Timestamp f, Timestamp t, double theta);

inline constexpr double kEpsilonNorm = 1e-12;

struct NormalizedMap {
  ScalarMap map;
  double norm = 0.0;
  bool degenerate = false;
};

/// Divides by the global L2 norm; maps with norm below kEpsilonNorm become zero
/// and are flagged degenerate.
NormalizedMap normalize_l2(const ScalarMap& map);

}  // namespace evd
