#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evdeblur/event_core.hpp"
#include "evdeblur/geometry.hpp"
#include "evdeblur/ldi.hpp"
#include "evdeblur/toyscene.hpp"

namespace evd {

namespace fs = std::filesystem;

/// Writes to a temporary sibling and renames it over `path`.
void atomic_write(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);
/// Lowercase hex SHA-256 of a file's contents.
std::string sha256_file(const fs::path& path);

inline constexpr std::size_t kEventHeaderBytes = 20;
inline constexpr std::size_t kEventRecordBytes = 16;

std::string encode_events(const EventStream& stream);
/// `coverage` sets the time span of the returned stream; by default it is the span of the
/// events themselves ([0, 0] when empty).
EventStream decode_events(std::string_view bytes, std::optional<ExposureWindow> coverage = std::nullopt);
void write_events(const fs::path& path, const EventStream& stream);
EventStream read_events(const fs::path& path, std::optional<ExposureWindow> coverage = std::nullopt);

void write_events_csv(const fs::path& path, const EventStream& stream);
EventStream read_events_csv(const fs::path& path, int width, int height,
                            std::optional<ExposureWindow> coverage = std::nullopt);

/// Binary PGM (P5). Values are clamped to [0, 1] and scaled to the max value.
std::string encode_pgm(const Image& image, int bits = 16);
Image decode_pgm(std::string_view bytes);
void write_pgm(const fs::path& path, const Image& image, int bits = 16);
Image read_pgm(const fs::path& path);

std::string encode_flow(const FlowField& flow);
FlowField decode_flow(std::string_view bytes, std::optional<std::pair<int, int>> expected_size = std::nullopt);
void write_flow(const fs::path& path, const FlowField& flow);
FlowField read_flow(const fs::path& path, std::optional<std::pair<int, int>> expected_size = std::nullopt);

std::string encode_trajectory(const BezierTrajectory& traj);
BezierTrajectory decode_trajectory(std::string_view text);
void write_trajectory(const fs::path& path, const BezierTrajectory& traj);
BezierTrajectory read_trajectory(const fs::path& path);

/// Binary parameters plus a text architecture descriptor at `path` with suffix ".arch".
void save_ldi_checkpoint(const fs::path& path, const LdiNetwork& net);
LdiNetwork load_ldi_checkpoint(const fs::path& path);
std::string ldi_architecture_descriptor(const LdiArchitecture& arch);

}  // namespace evd
