#include "evdeblur/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>

#include "evdeblur/random.hpp"

namespace evd {
namespace {

constexpr int kSsimRadius = 5;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

void require_stack(const FrameStack& frames, int expected, const char* what) {
  if (static_cast<int>(frames.size()) != expected) {
    throw DimensionError(fmt::format("{}: expected {} frames, got {}", what, expected, frames.size()));
  }
  for (const Image& f : frames) require_same_shape(f, frames.front(), what);
}

FrameStack zero_stack(const FrameStack& like) {
  FrameStack out;
  out.reserve(like.size());
  for (const Image& f : like) out.emplace_back(f.width(), f.height());
  return out;
}

void add_scaled(ScalarMap& dst, const ScalarMap& src, double s) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

ScalarMap log_ratio(const Image& a, const Image& b, double floor) {
  ScalarMap out(a.width(), a.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log((a[i] + floor) / (b[i] + floor));
  return out;
}

const std::array<double, 2 * kSsimRadius + 1>& gaussian_taps() {
  static const auto taps = [] {
    std::array<double, 2 * kSsimRadius + 1> g{};
    double total = 0.0;
    for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
      g[k + kSsimRadius] = std::exp(-0.5 * k * k / (kSsimSigma * kSsimSigma));
      total += g[k + kSsimRadius];
    }
    for (double& v : g) v /= total;
    return g;
  }();
  return taps;
}

// One separable pass. With `normalize` the weights are divided by the sum of the taps
// that land inside the grid; without it the pass is the adjoint of a normalized pass
// applied to input already divided by that sum.
ScalarMap filter_pass(const ScalarMap& in, bool horizontal, bool normalize) {
  const auto& g = gaussian_taps();
  const int w = in.width();
  const int h = in.height();
  ScalarMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      double z = 0.0;
      for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
        const int xs = horizontal ? x + k : x;
        const int ys = horizontal ? y : y + k;
        if (xs < 0 || ys < 0 || xs >= w || ys >= h) continue;
        acc += g[k + kSsimRadius] * in(xs, ys);
        z += g[k + kSsimRadius];
      }
      out(x, y) = normalize ? acc / z : acc;
    }
  }
  return out;
}

ScalarMap window_sums(int w, int h, bool horizontal) {
  ScalarMap ones(w, h, 1.0);
  return filter_pass(ones, horizontal, false);
}

ScalarMap gaussian_filter(const ScalarMap& in) { return filter_pass(filter_pass(in, true, true), false, true); }

ScalarMap gaussian_filter_adjoint(const ScalarMap& g) {
  const ScalarMap zh = window_sums(g.width(), g.height(), true);
  const ScalarMap zv = window_sums(g.width(), g.height(), false);
  ScalarMap t(g.width(), g.height());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = g[i] / zv[i];
  t = filter_pass(t, false, false);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] /= zh[i];
  return filter_pass(t, true, false);
}

ScalarMap product(const ScalarMap& a, const ScalarMap& b) {
  ScalarMap out(a.width(), a.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace

SampleSchedule SampleSchedule::uniform(const ExposureWindow& exposure, int n, std::uint64_t rng_seed) {
  if (n < 1) throw ParameterError("sample schedule needs N >= 1");
  const Timestamp duration = exposure.duration();
  if (duration < 2 * n) throw ParameterError("exposure too short for the sample schedule");
  SampleSchedule s;
  s.n = n;
  s.rng_seed = rng_seed;
  for (int i = 0; i <= 2 * n; ++i) {
    s.times.push_back(exposure.t_open +
                      static_cast<Timestamp>(std::llround(static_cast<long double>(duration) * i / (2 * n))));
  }
  return s;
}

int SampleSchedule::index_of(Timestamp t) const {
  const auto it = std::find(times.begin(), times.end(), t);
  if (it == times.end()) throw RangeError(fmt::format("timestamp {} is not a schedule sample", t));
  return static_cast<int>(it - times.begin());
}

std::vector<int> draw_reference_indices(const SampleSchedule& schedule, std::uint64_t step) {
  Rng rng(derive_seed(schedule.rng_seed, step));
  std::vector<int> draws(static_cast<std::size_t>(2 * schedule.n));
  for (int i = 0; i < 2 * schedule.n; ++i) draws[i] = static_cast<int>(uniform_index(rng, i + 1));
  return draws;
}

std::vector<int> adjacent_reference_indices(const SampleSchedule& schedule) {
  std::vector<int> draws(static_cast<std::size_t>(2 * schedule.n));
  for (int i = 0; i < 2 * schedule.n; ++i) draws[i] = i;
  return draws;
}

void LossWeights::validate() const {
  if (!(lambda >= 0.0) || !(lambda_ssim >= 0.0) || lambda_ssim > 1.0) {
    throw ParameterError("loss weights must be non-negative and lambda_ssim at most 1");
  }
  if (upsample < 1) throw ParameterError("upsample factor M must be at least 1");
}

EventEvidence::EventEvidence(const EventStream& events, const SampleSchedule& schedule, double theta,
                             std::span<const FlowField> flows)
    : frames_(schedule.size()), width_(events.width()), height_(events.height()) {
  for (int s = 0; s < frames_; ++s) {
    for (int j = s + 1; j < frames_; ++j) {
      // Oriented like log(C_s / C_j): accumulate from t_j back to t_s.
      measured_.push_back(normalize_l2(delta_log(events, schedule.times[j], schedule.times[s], theta)));
    }
  }
  if (!flows.empty()) {
    if (static_cast<int>(flows.size()) != frames_ - 1) {
      throw DimensionError(fmt::format("expected {} interval flows, got {}", frames_ - 1, flows.size()));
    }
    for (int i = 0; i + 1 < frames_; ++i) {
      const auto acc = warp_events(events, flows[i], schedule.times[i + 1], schedule.times[i],
                                   schedule.times[i + 1], theta);
      warped_.push_back(normalize_l2(acc.map));
    }
  }
}

const NormalizedMap& EventEvidence::measured(int s, int j) const {
  if (s < 0 || j <= s || j >= frames_) throw RangeError("event evidence pair out of range");
  // Row s starts after rows 0..s-1, each holding frames_-1-r entries.
  const int row_start = s * (frames_ - 1) - s * (s - 1) / 2;
  return measured_[static_cast<std::size_t>(row_start + (j - s - 1))];
}

const NormalizedMap& EventEvidence::warped(int i) const {
  if (i < 0 || i >= static_cast<int>(warped_.size())) throw RangeError("warped evidence interval out of range");
  return warped_[static_cast<std::size_t>(i)];
}

double normalized_pair_loss(const NormalizedMap& measured, const ScalarMap& predicted, ScalarMap* grad_pred) {
  require_same_shape(measured.map, predicted, "event pair loss");
  const NormalizedMap pred = normalize_l2(predicted);
  const auto p = static_cast<double>(predicted.size());
  if (grad_pred) *grad_pred = ScalarMap(predicted.width(), predicted.height());
  if (measured.degenerate && pred.degenerate) return 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = pred.map[i] - measured.map[i];
    loss += d * d;
  }
  loss /= p;
  if (grad_pred && !pred.degenerate) {
    // d/dp of |p/|p| - m|^2 / P: project (2/P)(n - m) off n and scale by 1/|p|.
    double dot = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) dot += pred.map[i] * (pred.map[i] - measured.map[i]);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      const double gn = pred.map[i] - measured.map[i];
      (*grad_pred)[i] = 2.0 / p * (gn - pred.map[i] * dot) / pred.norm;
    }
  }
  return loss;
}

double ev_loss(const FrameStack& frames, const EventEvidence& evidence, std::span<const int> draws,
               double intensity_floor, FrameStack* grad) {
  require_stack(frames, evidence.frames(), "ev_loss");
  const int pairs = evidence.frames() - 1;
  if (static_cast<int>(draws.size()) != pairs) throw DimensionError("ev_loss: one reference draw per pair required");
  if (grad) *grad = zero_stack(frames);
  double total = 0.0;
  ScalarMap g;
  for (int i = 0; i < pairs; ++i) {
    const int s = draws[i];
    const int j = i + 1;
    if (s < 0 || s > i) throw RangeError("ev_loss: reference draw outside [0, i]");
    const ScalarMap predicted = log_ratio(frames[s], frames[j], intensity_floor);
    total += normalized_pair_loss(evidence.measured(s, j), predicted, grad ? &g : nullptr);
    if (grad) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double gk = g[k] / pairs;
        (*grad)[s][k] += gk / (frames[s][k] + intensity_floor);
        (*grad)[j][k] -= gk / (frames[j][k] + intensity_floor);
      }
    }
  }
  return total / pairs;
}

double ev_loss(const FrameStack& frames, const EventStream& events, const SampleSchedule& schedule, double theta,
               std::span<const int> draws, double intensity_floor) {
  return ev_loss(frames, EventEvidence(events, schedule, theta), draws, intensity_floor);
}

std::vector<WarpedChangePredictor> make_predictors(std::span<const FlowField> flows, const SampleSchedule& schedule,
                                                   double intensity_floor) {
  if (static_cast<int>(flows.size()) != schedule.size() - 1) {
    throw DimensionError(fmt::format("expected {} interval flows, got {}", schedule.size() - 1, flows.size()));
  }
  std::vector<WarpedChangePredictor> out;
  for (int i = 0; i + 1 < schedule.size(); ++i) {
    out.emplace_back(flows[i], schedule.times[i + 1] - schedule.times[i], intensity_floor);
  }
  return out;
}

double ev_warped_loss(const FrameStack& frames, const EventEvidence& evidence,
                      std::span<const WarpedChangePredictor> predictors, FrameStack* grad) {
  require_stack(frames, evidence.frames(), "ev_warped_loss");
  const int pairs = evidence.frames() - 1;
  if (static_cast<int>(predictors.size()) != pairs || !evidence.has_warped()) {
    throw DimensionError("ev_warped_loss: one flow per interval required");
  }
  if (grad) *grad = zero_stack(frames);
  double total = 0.0;
  ScalarMap g;
  for (int i = 0; i < pairs; ++i) {
    const ScalarMap predicted = predictors[i].predict(frames[i]);
    total += normalized_pair_loss(evidence.warped(i), predicted, grad ? &g : nullptr);
    if (grad) {
      g *= 1.0 / pairs;
      (*grad)[i] += predictors[i].adjoint(frames[i], g);
    }
  }
  return total / pairs;
}

double ev_warped_loss(const FrameStack& frames, const EventStream& events, std::span<const FlowField> flows,
                      const SampleSchedule& schedule, double theta, double intensity_floor) {
  const EventEvidence evidence(events, schedule, theta, flows);
  const auto predictors = make_predictors(flows, schedule, intensity_floor);
  return ev_warped_loss(frames, evidence, predictors);
}

double temporal_ev_loss(const FrameStack& frames, const EventEvidence& evidence, std::span<const int> draws,
                        std::span<const WarpedChangePredictor> predictors, double intensity_floor, FrameStack* grad) {
  FrameStack g_w;
  const double warped = ev_warped_loss(frames, evidence, predictors, grad ? &g_w : nullptr);
  const double plain = ev_loss(frames, evidence, draws, intensity_floor, grad);
  if (grad) {
    for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += g_w[i];
  }
  return warped + plain;
}

double ssim(const Image& a, const Image& b, Image* grad_a, Image* grad_b) {
  require_same_shape(a, b, "ssim");
  const ScalarMap mu_a = gaussian_filter(a);
  const ScalarMap mu_b = gaussian_filter(b);
  const ScalarMap s_aa = gaussian_filter(product(a, a));
  const ScalarMap s_bb = gaussian_filter(product(b, b));
  const ScalarMap s_ab = gaussian_filter(product(a, b));
  const auto p = static_cast<double>(a.size());
  double total = 0.0;
  const bool want = grad_a || grad_b;
  ScalarMap d_mu_a, d_mu_b, d_saa, d_sbb, d_sab;
  if (want) {
    d_mu_a = d_mu_b = d_saa = d_sbb = d_sab = ScalarMap(a.width(), a.height());
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double a1 = 2.0 * ma * mb + kSsimC1;
    const double a2 = 2.0 * (s_ab[i] - ma * mb) + kSsimC2;
    const double b1 = ma * ma + mb * mb + kSsimC1;
    const double b2 = (s_aa[i] - ma * ma) + (s_bb[i] - mb * mb) + kSsimC2;
    const double s = a1 * a2 / (b1 * b2);
    total += s;
    if (want) {
      const double inv = 1.0 / (b1 * b2);
      d_mu_a[i] = (2.0 * mb * (a2 - a1) * inv - 2.0 * ma * s * (1.0 / b1 - 1.0 / b2)) / p;
      d_mu_b[i] = (2.0 * ma * (a2 - a1) * inv - 2.0 * mb * s * (1.0 / b1 - 1.0 / b2)) / p;
      d_saa[i] = -s / b2 / p;
      d_sbb[i] = -s / b2 / p;
      d_sab[i] = 2.0 * a1 * inv / p;
    }
  }
  if (want) {
    const ScalarMap t_sab = gaussian_filter_adjoint(d_sab);
    if (grad_a) {
      const ScalarMap t_mu = gaussian_filter_adjoint(d_mu_a);
      const ScalarMap t_saa = gaussian_filter_adjoint(d_saa);
      *grad_a = ScalarMap(a.width(), a.height());
      for (std::size_t i = 0; i < a.size(); ++i) (*grad_a)[i] = t_mu[i] + 2.0 * a[i] * t_saa[i] + b[i] * t_sab[i];
    }
    if (grad_b) {
      const ScalarMap t_mu = gaussian_filter_adjoint(d_mu_b);
      const ScalarMap t_sbb = gaussian_filter_adjoint(d_sbb);
      *grad_b = ScalarMap(a.width(), a.height());
      for (std::size_t i = 0; i < a.size(); ++i) (*grad_b)[i] = t_mu[i] + 2.0 * b[i] * t_sbb[i] + a[i] * t_sab[i];
    }
  }
  return total / p;
}

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double composite_image_loss(const Image& a, const Image& b, double lambda_ssim, Image* grad_a, Image* grad_b) {
  require_same_shape(a, b, "composite image loss");
  const auto p = static_cast<double>(a.size());
  double l1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
  l1 /= p;
  double s = 1.0;
  Image sa, sb;
  if (lambda_ssim != 0.0) s = ssim(a, b, grad_a ? &sa : nullptr, grad_b ? &sb : nullptr);
  const double loss = (1.0 - lambda_ssim) * l1 + lambda_ssim * 0.5 * (1.0 - s);
  auto fill = [&](Image* out, const Image& ssim_grad, double sign) {
    *out = Image(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      (*out)[i] = sign * (1.0 - lambda_ssim) * sgn / p;
      if (lambda_ssim != 0.0) (*out)[i] -= 0.5 * lambda_ssim * ssim_grad[i];
    }
  };
  if (grad_a) fill(grad_a, sa, 1.0);
  if (grad_b) fill(grad_b, sb, -1.0);
  return loss;
}

BlurSynthesizer::BlurSynthesizer(std::span<const FlowField> flows, int upsample) {
  if (upsample < 1) throw ParameterError("upsample factor M must be at least 1");
  if (flows.empty()) throw DimensionError("blur synthesis needs at least one interval flow");
  width_ = flows.front().width();
  height_ = flows.front().height();
  frames_ = static_cast<int>(flows.size()) + 1;
  virtual_frames_ = static_cast<int>(flows.size()) * upsample + 1;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const FlowField& f = flows[i];
    if (f.width() != width_ || f.height() != height_) throw DimensionError("interval flows differ in size");
    for (int m = 1; m < upsample; ++m) {
      // Frames move with the forward flow, so the inserted frame at fraction m/M looks
      // back along the flow to find its source.
      const double frac = static_cast<double>(m) / upsample;
      Gather g;
      g.frame = static_cast<int>(i);
      g.begin.push_back(0);
      for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
          const double sx = std::clamp(x - frac * f.u(x, y), 0.0, width_ - 1.0);
          const double sy = std::clamp(y - frac * f.v(x, y), 0.0, height_ - 1.0);
          const int x0 = std::min(static_cast<int>(sx), width_ - 1);
          const int y0 = std::min(static_cast<int>(sy), height_ - 1);
          const double ax = sx - x0, ay = sy - y0;
          const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
          const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
          const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
          for (int k = 0; k < 4; ++k) {
            if (w[k] == 0.0) continue;
            g.taps.push_back({static_cast<std::uint32_t>(ys[k] * width_ + xs[k]), w[k]});
          }
          g.begin.push_back(static_cast<std::uint32_t>(g.taps.size()));
        }
      }
      gathers_.push_back(std::move(g));
    }
  }
}

Image BlurSynthesizer::average(const FrameStack& frames) const {
  require_stack(frames, frames_, "blur synthesis");
  Image out(width_, height_);
  for (const Image& f : frames) out += f;  // the m = 0 copy of every frame
  for (const Gather& g : gathers_) {
    const Image& src = frames[g.frame];
    for (std::size_t d = 0; d + 1 < g.begin.size(); ++d) {
      double acc = 0.0;
      for (std::uint32_t k = g.begin[d]; k < g.begin[d + 1]; ++k) acc += g.taps[k].weight * src[g.taps[k].src];
      out[d] += acc;
    }
  }
  out *= 1.0 / virtual_frames_;
  return out;
}

FrameStack BlurSynthesizer::adjoint(const Image& grad_average) const {
  const double s = 1.0 / virtual_frames_;
  FrameStack out(static_cast<std::size_t>(frames_), grad_average * s);
  for (const Gather& g : gathers_) {
    Image& dst = out[g.frame];
    for (std::size_t d = 0; d + 1 < g.begin.size(); ++d) {
      const double gd = grad_average[d] * s;
      for (std::uint32_t k = g.begin[d]; k < g.begin[d + 1]; ++k) dst[g.taps[k].src] += g.taps[k].weight * gd;
    }
  }
  return out;
}

double blur_loss(const FrameStack& frames, const BlurSynthesizer& synth, const Image& blur_gt,
                 const LossWeights& weights, FrameStack* grad) {
  const Image avg = synth.average(frames);
  Image g;
  const double loss = composite_image_loss(avg, blur_gt, weights.lambda_ssim, grad ? &g : nullptr);
  if (grad) *grad = synth.adjoint(g);
  return loss;
}

double blur_loss(const FrameStack& frames, std::span<const FlowField> flows, const Image& blur_gt,
                 const LossWeights& weights) {
  return blur_loss(frames, BlurSynthesizer(flows, weights.upsample), blur_gt, weights);
}

std::vector<ScalarMap> residual_oracle(const FrameStack& gt_frames) {
  if (gt_frames.size() < 3 || gt_frames.size() % 2 == 0) throw DimensionError("residual oracle needs 2N+1 frames");
  require_stack(gt_frames, static_cast<int>(gt_frames.size()), "residual oracle");
  const Image& anchor = gt_frames[gt_frames.size() / 2];
  std::vector<ScalarMap> out;
  for (const Image& f : gt_frames) out.push_back(f - anchor);
  return out;
}

double residual_loss(const FrameStack& frames, const std::vector<ScalarMap>& residuals, FrameStack* grad) {
  if (frames.size() != residuals.size()) throw DimensionError("residual loss: frame and residual counts differ");
  require_stack(frames, static_cast<int>(frames.size()), "residual loss");
  const std::size_t anchor = frames.size() / 2;
  const auto count = static_cast<double>(frames.size());
  const auto p = static_cast<double>(frames.front().size());
  if (grad) *grad = zero_stack(frames);
  double total = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    require_same_shape(frames[i], residuals[i], "residual loss");
    double sq = 0.0;
    for (std::size_t k = 0; k < frames[i].size(); ++k) {
      const double d = residuals[i][k] - (frames[i][k] - frames[anchor][k]);
      sq += d * d;
      if (grad) {
        const double g = -2.0 * d / (p * count);
        (*grad)[i][k] += g;
        (*grad)[anchor][k] -= g;
      }
    }
    total += sq / p;
  }
  return total / count;
}

double joint_loss(const FrameStack& ldi_frames, const FrameStack& rendered_frames, const LossWeights& weights,
                  FrameStack* grad_ldi, FrameStack* grad_rendered) {
  if (ldi_frames.size() != rendered_frames.size() || ldi_frames.empty()) {
    throw DimensionError("joint loss: stack sizes differ");
  }
  const auto count = static_cast<double>(ldi_frames.size());
  if (grad_ldi) grad_ldi->assign(ldi_frames.size(), Image());
  if (grad_rendered) grad_rendered->assign(ldi_frames.size(), Image());
  double total = 0.0;
  for (std::size_t i = 0; i < ldi_frames.size(); ++i) {
    Image* ga = grad_ldi ? &(*grad_ldi)[i] : nullptr;
    Image* gb = grad_rendered ? &(*grad_rendered)[i] : nullptr;
    total += composite_image_loss(ldi_frames[i], rendered_frames[i], weights.lambda_ssim, ga, gb);
    if (ga) *ga *= 1.0 / count;
    if (gb) *gb *= 1.0 / count;
  }
  return total / count;
}

const char* term_name(Term term) {
  switch (term) {
    case Term::blur_gs: return "blur_gs";
    case Term::ev_gs: return "ev_gs";
    case Term::ev_w: return "ev_w";
    case Term::res: return "res";
    case Term::ldi_blur: return "ldi_blur";
    case Term::ldi_ev: return "ldi_ev";
    case Term::joint: return "joint";
  }
  return "?";
}

Term parse_term(const std::string& name) {
  for (int i = 0; i < kTermCount; ++i) {
    if (name == term_name(static_cast<Term>(i))) return static_cast<Term>(i);
  }
  throw ConfigError(fmt::format("unknown loss term '{}'", name));
}

double weighted_total(const LossBreakdown& terms, const LossWeights& weights, const TermMask& mask) {
  double total = 0.0;
  for (int i = 0; i < kTermCount; ++i) {
    const auto t = static_cast<Term>(i);
    if (!mask[t]) continue;
    const bool weighted = t == Term::ev_gs || t == Term::ev_w || t == Term::res || t == Term::ldi_ev;
    total += (weighted ? weights.lambda : 1.0) * terms[t];
  }
  return total;
}

LossBreakdown total_objective(const FrameStack& rendered, const FrameStack& ldi, const ObjectiveContext& ctx,
                              ObjectiveGradient* grad) {
  LossBreakdown out;
  const TermMask& mask = ctx.mask;
  const LossWeights& w = ctx.weights;
  const bool need_ldi = mask[Term::ldi_blur] || mask[Term::ldi_ev] || mask[Term::joint];
  if (grad) {
    grad->rendered = zero_stack(rendered);
    grad->ldi = need_ldi ? zero_stack(ldi) : FrameStack{};
  }
  auto accumulate = [](FrameStack& dst, const FrameStack& src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) add_scaled(dst[i], src[i], scale);
  };
  FrameStack g;
  if (mask[Term::blur_gs]) {
    out[Term::blur_gs] = blur_loss(rendered, *ctx.synthesizer, *ctx.blur, w, grad ? &g : nullptr);
    if (grad) accumulate(grad->rendered, g, 1.0);
  }
  if (mask[Term::ev_gs]) {
    out[Term::ev_gs] = ev_loss(rendered, *ctx.evidence, ctx.draws_gs, ctx.intensity_floor, grad ? &g : nullptr);
    if (grad) accumulate(grad->rendered, g, w.lambda);
  }
  if (mask[Term::ev_w]) {
    out[Term::ev_w] = ev_warped_loss(rendered, *ctx.evidence, ctx.predictors, grad ? &g : nullptr);
    if (grad) accumulate(grad->rendered, g, w.lambda);
  }
  if (mask[Term::res] && ctx.residuals) {
    out[Term::res] = residual_loss(rendered, *ctx.residuals, grad ? &g : nullptr);
    if (grad) accumulate(grad->rendered, g, w.lambda);
  }
  if (mask[Term::ldi_blur]) {
    Image avg(ldi.front().width(), ldi.front().height());
    for (const Image& f : ldi) avg += f;
    avg *= 1.0 / static_cast<double>(ldi.size());
    Image ga;
    out[Term::ldi_blur] = composite_image_loss(avg, *ctx.blur, w.lambda_ssim, grad ? &ga : nullptr);
    if (grad) {
      for (Image& dst : grad->ldi) add_scaled(dst, ga, 1.0 / static_cast<double>(ldi.size()));
    }
  }
  if (mask[Term::ldi_ev]) {
    out[Term::ldi_ev] = ev_loss(ldi, *ctx.evidence, ctx.draws_ldi, ctx.intensity_floor, grad ? &g : nullptr);
    if (grad) accumulate(grad->ldi, g, w.lambda);
  }
  if (mask[Term::joint]) {
    FrameStack gr;
    out[Term::joint] = joint_loss(ldi, rendered, w, grad ? &g : nullptr, grad ? &gr : nullptr);
    if (grad) {
      accumulate(grad->ldi, g, 1.0);
      accumulate(grad->rendered, gr, 1.0);
    }
  }
  TermMask effective = mask;
  if (!ctx.residuals) effective.set(Term::res, false);
  out.total = weighted_total(out, w, effective);
  return out;
}

}  // namespace evd
