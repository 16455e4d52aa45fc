#include "fixtures.hpp"

namespace evd::testing {

ScalarMap random_map(int width, int height, Rng& rng, double lo, double hi) {
  ScalarMap m(width, height);
  for (double& v : m.values()) v = uniform(rng, lo, hi);
  return m;
}

FrameStack random_stack(int count, int width, int height, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  FrameStack out;
  for (int i = 0; i < count; ++i) out.push_back(random_map(width, height, rng, lo, hi));
  return out;
}

EventStream random_stream(int width, int height, Timestamp t_start, Timestamp t_end, std::size_t count,
                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Event> events;
  for (std::size_t k = 0; k < count; ++k) {
    const auto t = t_start + static_cast<Timestamp>(uniform_index(rng, static_cast<std::uint64_t>(t_end - t_start)));
    const int x = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(width)));
    const int y = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(height)));
    events.push_back({t, x, y, uniform01(rng) < 0.5 ? -1 : 1});
  }
  return EventStream::from_unsorted(width, height, t_start, t_end, std::move(events));
}

std::vector<FlowField> random_flows(int count, int width, int height, Timestamp interval, double magnitude,
                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FlowField> out;
  for (int i = 0; i < count; ++i) {
    FlowField f(width, height, interval);
    f.u = random_map(width, height, rng, -magnitude, magnitude);
    f.v = random_map(width, height, rng, -magnitude, magnitude);
    out.push_back(std::move(f));
  }
  return out;
}

ExperimentConfig small_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.scene.width = 16;
  cfg.scene.height = 16;
  cfg.scene.texture_size = 24;
  cfg.scene.blob_count = 12;
  cfg.scene.intrinsics = {16.0, 16.0, 7.5, 7.5};
  cfg.trajectory.translation_px = {3.0, 1.25, 0.0};
  cfg.blur_substeps = 128;
  return cfg;
}

}  // namespace evd::testing
