#include "evdeblur/edi.hpp"

#include <algorithm>
#include <cmath>

namespace evd {

void BlurObservation::validate() const {
  if (blur.width() != events.width() || blur.height() != events.height()) {
    throw DimensionError("blur image and event sensor sizes differ");
  }
  if (events.t_start() > exposure.t_open || events.t_end() < exposure.t_close) {
    throw RangeError("event stream does not span the exposure window");
  }
}

ScalarMap double_integral(const EventStream& events, Timestamp f, const ExposureWindow& exposure, double theta,
                          int substeps) {
  if (!(theta > 0.0)) throw ParameterError("contrast threshold must be positive");
  if (substeps < 2) throw ParameterError("double integral needs at least 2 substeps");
  if (!exposure.contains(f)) throw RangeError("reference time outside the exposure window");

  const std::size_t pixels = static_cast<std::size_t>(events.width()) * events.height();
  // count(t) = signed number of events with timestamp < t; the inner integral is count(t) - count(f).
  std::vector<double> at_f(pixels, 0.0);
  for (const Event& e : events.slice(events.t_start(), f)) {
    at_f[static_cast<std::size_t>(e.y) * events.width() + e.x] += e.p;
  }

  std::vector<double> running(pixels, 0.0);
  std::vector<double> acc(pixels, 0.0);
  const auto& all = events.events();
  std::size_t cursor = 0;
  const double t0 = static_cast<double>(exposure.t_open);
  const double span = static_cast<double>(exposure.duration());
  for (int s = 0; s < substeps; ++s) {
    const double node = t0 + (s + 0.5) * span / substeps;
    while (cursor < all.size() && static_cast<double>(all[cursor].t) < node) {
      const Event& e = all[cursor++];
      running[static_cast<std::size_t>(e.y) * events.width() + e.x] += e.p;
    }
    for (std::size_t i = 0; i < pixels; ++i) acc[i] += std::exp(theta * (running[i] - at_f[i]));
  }
  ScalarMap out(events.width(), events.height());
  for (std::size_t i = 0; i < pixels; ++i) out[i] = acc[i] / substeps;
  return out;
}

Image edi_deblur(const BlurObservation& obs, Timestamp f, double theta, int substeps, double clamp_max) {
  obs.validate();
  const ScalarMap e = double_integral(obs.events, f, obs.exposure, theta, substeps);
  Image out(obs.blur.width(), obs.blur.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(obs.blur[i] / e[i], 0.0, clamp_max);
  return out;
}

double laplacian_variance(const Image& image) {
  if (image.width() < 3 || image.height() < 3) return 0.0;
  ScalarMap lap(image.width() - 2, image.height() - 2);
  for (int y = 1; y + 1 < image.height(); ++y) {
    for (int x = 1; x + 1 < image.width(); ++x) {
      lap(x - 1, y - 1) = image(x - 1, y) + image(x + 1, y) + image(x, y - 1) + image(x, y + 1) - 4.0 * image(x, y);
    }
  }
  return population_variance(lap);
}

ThetaEstimate estimate_theta(const BlurObservation& obs, std::span<const double> candidates, int substeps) {
  if (candidates.empty()) throw ParameterError("theta calibration needs at least one candidate");
  const Timestamp mid = obs.exposure.t_open + obs.exposure.duration() / 2;
  ThetaEstimate r;
  for (double theta : candidates) {
    r.scores.push_back(laplacian_variance(edi_deblur(obs, mid, theta, substeps)));
  }
  for (std::size_t i = 1; i < r.scores.size(); ++i) {
    if (r.scores[i] > r.scores[r.best_index]) r.best_index = i;
  }
  r.tie = std::all_of(r.scores.begin(), r.scores.end(), [&](double s) { return s == r.scores.front(); });
  r.theta = candidates[r.best_index];
  return r;
}

}  // namespace evd
