#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evdeblur/event_core.hpp"
#include "evdeblur/toyscene.hpp"
#include "evdeblur/warp.hpp"

namespace evd {

/// 2N+1 timestamps evenly spaced over the exposure, endpoints included.
struct SampleSchedule {
  int n = 3;
  std::vector<Timestamp> times;
  std::uint64_t rng_seed = 1;

  static SampleSchedule uniform(const ExposureWindow& exposure, int n = 3, std::uint64_t rng_seed = 1);
  int size() const { return static_cast<int>(times.size()); }
  int mid() const { return n; }
  Timestamp duration() const { return times.back() - times.front(); }
  /// Index of t in the schedule; throws RangeError if absent.
  int index_of(Timestamp t) const;
};

/// One reference index s_i in [0, i] per pair i in [0, 2N). Deterministic in (schedule seed, step).
std::vector<int> draw_reference_indices(const SampleSchedule& schedule, std::uint64_t step);
/// s_i = i for every pair.
std::vector<int> adjacent_reference_indices(const SampleSchedule& schedule);

struct LossWeights {
  double lambda = 0.1;
  double lambda_ssim = 0.2;
  int upsample = 4;  ///< M
  void validate() const;
};

using FrameStack = std::vector<Image>;

/// Normalized measured maps for every pair (s, j) with s < j and the warped maps per interval.
/// Built once per dataset; losses only read from it.
class EventEvidence {
 public:
  EventEvidence() = default;
  /// `flows` may be empty, in which case warped maps are unavailable.
  EventEvidence(const EventStream& events, const SampleSchedule& schedule, double theta,
                std::span<const FlowField> flows = {});

  const NormalizedMap& measured(int s, int j) const;
  const NormalizedMap& warped(int i) const;
  bool has_warped() const { return !warped_.empty(); }
  int frames() const { return frames_; }
  int width() const { return width_; }
  int height() const { return height_; }

 private:
  int frames_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<NormalizedMap> measured_;  // upper triangle, row-major over (s, j)
  std::vector<NormalizedMap> warped_;
};

/// Mean-square distance of two L2-normalized maps. If the prediction has nonzero
/// norm, `grad_pred` receives d(loss)/d(prediction); a degenerate prediction has zero gradient.
double normalized_pair_loss(const NormalizedMap& measured, const ScalarMap& predicted, ScalarMap* grad_pred = nullptr);

/// Random-reference event loss. draws[i] is the reference index for pair (draws[i], i+1).
double ev_loss(const FrameStack& frames, const EventEvidence& evidence, std::span<const int> draws,
               double intensity_floor, FrameStack* grad = nullptr);
double ev_loss(const FrameStack& frames, const EventStream& events, const SampleSchedule& schedule, double theta,
               std::span<const int> draws, double intensity_floor = 1e-3);

/// Precomputed warped-change predictors, one per interval.
std::vector<WarpedChangePredictor> make_predictors(std::span<const FlowField> flows, const SampleSchedule& schedule,
                                                   double intensity_floor);

double ev_warped_loss(const FrameStack& frames, const EventEvidence& evidence,
                      std::span<const WarpedChangePredictor> predictors, FrameStack* grad = nullptr);
double ev_warped_loss(const FrameStack& frames, const EventStream& events, std::span<const FlowField> flows,
                      const SampleSchedule& schedule, double theta, double intensity_floor = 1e-3);

double temporal_ev_loss(const FrameStack& frames, const EventEvidence& evidence, std::span<const int> draws,
                        std::span<const WarpedChangePredictor> predictors, double intensity_floor,
                        FrameStack* grad = nullptr);

/// SSIM with an 11x11 Gaussian window (sigma 1.5), renormalized where it is cut by the border.
double ssim(const Image& a, const Image& b, Image* grad_a = nullptr, Image* grad_b = nullptr);
/// 10 log10(1 / MSE), capped at 99 dB.
double psnr(const Image& a, const Image& b);
inline constexpr double kPsnrCap = 99.0;

/// (1 - lambda_ssim) mean|a - b| + lambda_ssim (1 - SSIM) / 2.
double composite_image_loss(const Image& a, const Image& b, double lambda_ssim, Image* grad_a = nullptr,
                            Image* grad_b = nullptr);

/// Averages 2N*M + 1 virtual frames: frame i gathered at x - (m/M) u_i(x) for m < M,
/// plus the last frame once. Gathering is linear, so the adjoint is a fixed scatter.
class BlurSynthesizer {
 public:
  BlurSynthesizer() = default;
  BlurSynthesizer(std::span<const FlowField> flows, int upsample);

  Image average(const FrameStack& frames) const;
  /// d(loss)/d(frames) given d(loss)/d(average).
  FrameStack adjoint(const Image& grad_average) const;
  int virtual_frames() const { return virtual_frames_; }

 private:
  struct Tap {
    std::uint32_t src;
    double weight;
  };
  struct Gather {
    int frame;
    std::vector<std::uint32_t> begin;  // CSR offsets per destination pixel
    std::vector<Tap> taps;
  };
  int width_ = 0;
  int height_ = 0;
  int frames_ = 0;
  int virtual_frames_ = 0;
  std::vector<Gather> gathers_;
};

double blur_loss(const FrameStack& frames, const BlurSynthesizer& synth, const Image& blur_gt,
                 const LossWeights& weights, FrameStack* grad = nullptr);
double blur_loss(const FrameStack& frames, std::span<const FlowField> flows, const Image& blur_gt,
                 const LossWeights& weights);

/// R(t_i) = I(t_i) - I(t_N).
std::vector<ScalarMap> residual_oracle(const FrameStack& gt_frames);
double residual_loss(const FrameStack& frames, const std::vector<ScalarMap>& residuals, FrameStack* grad = nullptr);

double joint_loss(const FrameStack& ldi_frames, const FrameStack& rendered_frames, const LossWeights& weights,
                  FrameStack* grad_ldi = nullptr, FrameStack* grad_rendered = nullptr);

/// Terms of the overall objective. Each can be switched off for ablations.
enum class Term { blur_gs, ev_gs, ev_w, res, ldi_blur, ldi_ev, joint };
inline constexpr int kTermCount = 7;
const char* term_name(Term term);
/// Parses a term name as used on the command line; throws ConfigError otherwise.
Term parse_term(const std::string& name);

struct TermMask {
  bool enabled[kTermCount] = {true, true, true, true, true, true, true};
  bool operator[](Term t) const { return enabled[static_cast<int>(t)]; }
  void set(Term t, bool on) { enabled[static_cast<int>(t)] = on; }
};

struct LossBreakdown {
  double value[kTermCount] = {};
  double total = 0.0;
  double operator[](Term t) const { return value[static_cast<int>(t)]; }
  double& operator[](Term t) { return value[static_cast<int>(t)]; }
};

/// blur_gs + lambda (ev_w + ev_gs) + lambda res + (ldi_blur + lambda ldi_ev) + joint, skipping masked terms.
double weighted_total(const LossBreakdown& terms, const LossWeights& weights, const TermMask& mask);

/// Everything the overall objective reads apart from the two frame stacks.
struct ObjectiveContext {
  const EventEvidence* evidence = nullptr;
  std::span<const WarpedChangePredictor> predictors;
  const BlurSynthesizer* synthesizer = nullptr;
  const Image* blur = nullptr;
  const std::vector<ScalarMap>* residuals = nullptr;  ///< null drops the residual term
  std::span<const int> draws_gs;
  std::span<const int> draws_ldi;
  LossWeights weights;
  TermMask mask;
  double intensity_floor = 1e-3;
};

struct ObjectiveGradient {
  FrameStack rendered;
  FrameStack ldi;
};

/// Evaluates every enabled term. Disabled terms report 0. Gradients are of the weighted total.
LossBreakdown total_objective(const FrameStack& rendered, const FrameStack& ldi, const ObjectiveContext& ctx,
                              ObjectiveGradient* grad = nullptr);

}  // namespace evd
