#pragma once

#include <string>
#include <vector>

#include "evdeblur/optim.hpp"

namespace evd::testing {

struct GradientCase {
  std::string name;
  std::size_t coordinates = 0;
  GradCheckResult result;
};

/// Analytic against central-difference gradients for every loss term, the overall objective
/// and the LDI network, each on its own random 16x16 instance.
std::vector<GradientCase> run_gradient_suite();

}  // namespace evd::testing
