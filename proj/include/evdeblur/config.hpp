#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "evdeblur/errors.hpp"
#include "evdeblur/losses.hpp"
#include "evdeblur/toyscene.hpp"

namespace evd {

enum class FlowSource { ground_truth, contrast_max };
enum class ResidualSource { oracle, none };

const char* to_string(FlowSource s);
const char* to_string(ResidualSource s);

struct SceneConfig {
  std::string texture = "procedural";  ///< or a path to a PGM file
  int texture_size = 96;
  int blob_count = 150;
  int width = 64;
  int height = 64;
  Intrinsics intrinsics;
  Eigen::Vector3d plane_normal = Eigen::Vector3d::UnitZ();
  double plane_depth = 1.0;
  double intensity_floor = 1e-3;
};

/// Ground-truth motion: each control point j sits at s = j / 8 along a path whose end
/// displacement is given in pixel-equivalent translation and degrees of rotation.
struct TrajectoryConfig {
  Timestamp exposure_ns = 12'000'000;
  Eigen::Vector3d translation_px{12.0, 5.0, 0.0};
  Eigen::Vector3d rotation_deg{0.0, 0.0, 1.7};
  double acceleration = 0.5;  ///< 0 uniform velocity, 1 purely quadratic
};

struct OptimConfig {
  int iterations = 2000;
  int ldi_pretrain = 500;
  double lr_trajectory = 1e-2;
  double lr_ldi = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double perturb_rotation_deg = 1.0;
  double perturb_translation_px = 2.0;
  bool alternate = false;
};

struct ExperimentConfig {
  SceneConfig scene;
  TrajectoryConfig trajectory;
  SynthConfig synth;
  int blur_substeps = 512;
  int schedule_n = 3;
  LossWeights weights;
  OptimConfig optim;
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  FlowSource flow_source = FlowSource::ground_truth;
  ResidualSource residual_source = ResidualSource::oracle;
  std::vector<Term> ablate;
  double theta = 0.0;  ///< contrast threshold used for EDI; 0 means the synthesis threshold
  int edi_substeps = 64;
  double flow_search_px = 4.0;
  double flow_search_step = 0.5;

  double edi_theta() const { return theta > 0.0 ? theta : synth.theta_pos; }
  TermMask term_mask() const;
  void validate() const;
};

/// Parses "[section]" headers and "key = value" lines; '#' starts a comment. Every key must
/// be known; the first unknown key raises ConfigError naming it.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Text that parses back to the same configuration.
std::string config_to_text(const ExperimentConfig& cfg);

std::vector<Term> parse_term_list(std::string_view list);

}  // namespace evd
