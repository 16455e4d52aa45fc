#include "evdeblur/event_core.hpp"

#include <algorithm>
#include <string>

namespace evd {

ExposureWindow::ExposureWindow(Timestamp open, Timestamp close) : t_open(open), t_close(close) {
  if (close <= open) {
    throw ParameterError("exposure window must satisfy t_close > t_open");
  }
}

EventStream::EventStream(int width, int height, Timestamp t_start, Timestamp t_end, std::vector<Event> events)
    : width_(width), height_(height), t_start_(t_start), t_end_(t_end), events_(std::move(events)) {
  if (width < 1 || height < 1) {
    throw DimensionError("event stream dimensions must be at least 1x1");
  }
  if (t_end < t_start) {
    throw RangeError("event stream t_end precedes t_start");
  }
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const Event& e = events_[i];
    if (e.x < 0 || e.y < 0 || e.x >= width || e.y >= height) {
      throw RangeError("event " + std::to_string(i) + " outside the sensor grid");
    }
    if (e.p != 1 && e.p != -1) {
      throw ParameterError("event " + std::to_string(i) + " has polarity other than +1/-1");
    }
    if (e.t < t_start || e.t > t_end) {
      throw RangeError("event " + std::to_string(i) + " outside the stream time range");
    }
    if (i > 0 && e.t < events_[i - 1].t) {
      throw RangeError("event " + std::to_string(i) + " breaks timestamp ordering");
    }
  }
}

EventStream EventStream::from_unsorted(int width, int height, Timestamp t_start, Timestamp t_end,
                                       std::vector<Event> events) {
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return EventStream(width, height, t_start, t_end, std::move(events));
}

std::span<const Event> EventStream::slice(Timestamp a, Timestamp b) const {
  if (b <= a) return {};
  auto by_time = [](const Event& e, Timestamp t) { return e.t < t; };
  auto first = std::lower_bound(events_.begin(), events_.end(), a, by_time);
  auto last = std::lower_bound(first, events_.end(), b, by_time);
  return {first, last};
}

void EventStream::require_in_range(Timestamp t, const char* what) const {
  if (t < t_start_ || t > t_end_) {
    throw RangeError(std::string(what) + ": timestamp " + std::to_string(t) + " outside [" +
                     std::to_string(t_start_) + ", " + std::to_string(t_end_) + "]");
  }
}

ScalarMap accumulate(const EventStream& stream, Timestamp f, Timestamp t) {
  stream.require_in_range(f, "accumulate");
  stream.require_in_range(t, "accumulate");
  ScalarMap out(stream.width(), stream.height());
  const double sign = f > t ? -1.0 : 1.0;
  for (const Event& e : stream.slice(std::min(f, t), std::max(f, t))) {
    out(e.x, e.y) += sign * e.p;
  }
  return out;
}

ScalarMap delta_log(const EventStream& stream, Timestamp f, Timestamp t, double theta) {
  if (!(theta > 0.0)) {
    throw ParameterError("contrast threshold must be positive");
  }
  ScalarMap out = accumulate(stream, f, t);
  out *= theta;
  return out;
}

NormalizedMap normalize_l2(const ScalarMap& map) {
  NormalizedMap r;
  r.norm = l2_norm(map);
  if (r.norm < kEpsilonNorm) {
    r.map = ScalarMap(map.width(), map.height());
    r.degenerate = true;
    return r;
  }
  r.map = map;
  r.map *= 1.0 / r.norm;
  return r;
}

}  // namespace evd
