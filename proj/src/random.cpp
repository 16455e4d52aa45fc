#include "evdeblur/random.hpp"

#include <cmath>
#include <numbers>

namespace evd {

double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t poisson(Rng& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  // Split large means so exp(-mean) stays representable.
  std::uint64_t total = 0;
  while (mean > 50.0) {
    total += poisson(rng, 50.0);
    mean -= 50.0;
  }
  const double limit = std::exp(-mean);
  double prod = uniform01(rng);
  std::uint64_t k = 0;
  while (prod > limit) {
    ++k;
    prod *= uniform01(rng);
  }
  return total + k;
}

}  // namespace evd
