#pragma once

#include <cstdint>
#include <vector>

#include "evdeblur/config.hpp"
#include "evdeblur/event_core.hpp"
#include "evdeblur/losses.hpp"
#include "evdeblur/pipeline.hpp"
#include "evdeblur/random.hpp"

namespace evd::testing {

ScalarMap random_map(int width, int height, Rng& rng, double lo = 0.0, double hi = 1.0);
FrameStack random_stack(int count, int width, int height, std::uint64_t seed, double lo = 0.1, double hi = 0.9);
EventStream random_stream(int width, int height, Timestamp t_start, Timestamp t_end, std::size_t count,
                          std::uint64_t seed);
std::vector<FlowField> random_flows(int count, int width, int height, Timestamp interval, double magnitude,
                                    std::uint64_t seed);

/// Default experiment shrunk to a 16x16 sensor with proportionally smaller motion.
ExperimentConfig small_config(std::uint64_t seed = 1);

}  // namespace evd::testing
