#pragma once

#include <limits>
#include <span>
#include <vector>

#include "evdeblur/event_core.hpp"

namespace evd {

struct BlurObservation {
  Image blur;
  ExposureWindow exposure;
  EventStream events;

  /// Throws unless the events span the exposure and match the image size.
  void validate() const;
};

inline constexpr int kDefaultEdiSubsteps = 64;
inline constexpr double kEdiClampMax = 2.0;

/// E(f, T) = (1/T) int_T exp(theta int_f^t e(s) ds) dt by the midpoint rule; inner
/// integrals are exact signed event counts.
ScalarMap double_integral(const EventStream& events, Timestamp f, const ExposureWindow& exposure, double theta,
                          int substeps = kDefaultEdiSubsteps);

/// I(f) = B / E(f, T), clamped to [0, clamp_max]. Pass infinity to disable the clamp.
Image edi_deblur(const BlurObservation& obs, Timestamp f, double theta, int substeps = kDefaultEdiSubsteps,
                 double clamp_max = kEdiClampMax);

/// Variance of the 4-neighbour Laplacian over interior pixels.
double laplacian_variance(const Image& image);

struct ThetaEstimate {
  double theta = 0.0;
  std::size_t best_index = 0;
  std::vector<double> scores;
  bool tie = false;  ///< every candidate scored the same
};

/// Picks the candidate whose mid-exposure EDI frame has the largest Laplacian variance.
ThetaEstimate estimate_theta(const BlurObservation& obs, std::span<const double> candidates,
                             int substeps = kDefaultEdiSubsteps);

}  // namespace evd
