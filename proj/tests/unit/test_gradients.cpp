#include <gtest/gtest.h>

#include "gradient_suite.hpp"

namespace evd::testing {
namespace {

TEST(GradientSuite, EveryTermMatchesCentralDifferences) {
  for (const GradientCase& c : run_gradient_suite()) {
    SCOPED_TRACE(c.name);
    std::printf("%-18s coords %6zu max rel err %.3e (index %zu: analytic %.6e numeric %.6e)\n", c.name.c_str(),
                c.coordinates, c.result.max_relative_error, c.result.worst_index, c.result.analytic, c.result.numeric);
    EXPECT_LT(c.result.max_relative_error, 1e-4);
  }
}

}  // namespace
}  // namespace evd::testing
