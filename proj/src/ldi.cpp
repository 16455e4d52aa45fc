#include "evdeblur/ldi.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <variant>

#include <Eigen/Core>
#include <fmt/format.h>

#include "evdeblur/random.hpp"

namespace evd {
namespace {

constexpr int kTaps = 9;  // 3x3 kernel
constexpr double kSoftplusFloor = -30.0;

template <class S>
S softplus(S z) {
  const S zc = std::max(z, static_cast<S>(kSoftplusFloor));
  return zc > S(20) ? zc : std::log1p(std::exp(zc));
}

template <class S>
S softplus_slope(S z) {
  if (z < static_cast<S>(kSoftplusFloor)) return S(0);
  return S(1) / (S(1) + std::exp(-z));
}

}  // namespace

double EventTensor::total() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

EventTensor preprocess(const EventStream& stream, Timestamp t_from, Timestamp t_to, int bins) {
  if (bins < 2) throw ParameterError("event tensor needs at least two bins");
  stream.require_in_range(t_from, "preprocess");
  stream.require_in_range(t_to, "preprocess");
  EventTensor out;
  out.bins = bins;
  out.width = stream.width();
  out.height = stream.height();
  out.t_from = t_from;
  out.t_to = t_to;
  out.backward = t_from > t_to;
  out.values.assign(static_cast<std::size_t>(bins) * out.width * out.height, 0.0);
  const Timestamp lo = std::min(t_from, t_to);
  const Timestamp hi = std::max(t_from, t_to);
  if (hi == lo) return out;
  const auto span = static_cast<double>(hi - lo);
  const std::size_t plane = static_cast<std::size_t>(out.width) * out.height;
  for (const Event& e : stream.slice(lo, hi)) {
    const double elapsed = out.backward ? static_cast<double>(t_from - e.t) : static_cast<double>(e.t - t_from);
    const double pos = elapsed / span * (bins - 1);
    const int b0 = std::min(static_cast<int>(std::floor(pos)), bins - 1);
    const double frac = pos - b0;
    const double value = out.backward ? -e.p : e.p;
    const std::size_t pix = static_cast<std::size_t>(e.y) * out.width + e.x;
    out.values[b0 * plane + pix] += (1.0 - frac) * value;
    if (frac > 0.0) out.values[(b0 + 1) * plane + pix] += frac * value;
  }
  return out;
}

std::vector<LdiArchitecture::Layer> LdiArchitecture::layer_shapes() const {
  std::vector<Layer> shapes;
  for (int l = 0; l < layers; ++l) {
    shapes.push_back({l == 0 ? bins : hidden, l + 1 == layers ? 1 : hidden});
  }
  return shapes;
}

std::size_t LdiArchitecture::param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layer_shapes()) n += static_cast<std::size_t>(l.cout) * (l.cin * kTaps + 1);
  return n;
}

void LdiArchitecture::validate() const {
  if (bins < 2 || hidden < 1 || layers < 1) throw ParameterError("invalid LDI architecture");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ParameterError("leaky slope must lie in [0, 1)");
}

double ldi_output_bias_init() { return std::log(std::exp(1.0) - 1.0); }

LdiNetwork::LdiNetwork(const LdiArchitecture& arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  params_.assign(arch_.param_count(), 0.0);
  Rng rng(derive_seed(seed, "ldi-init"));
  std::size_t off = 0;
  const auto shapes = arch_.layer_shapes();
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto [cin, cout] = shapes[l];
    const double stddev = std::sqrt(2.0 / (cin * kTaps));
    const std::size_t nw = static_cast<std::size_t>(cout) * cin * kTaps;
    for (std::size_t k = 0; k < nw; ++k) params_[off + k] = stddev * normal01(rng);
    off += nw;
    if (l + 1 == shapes.size()) {
      for (int c = 0; c < cout; ++c) params_[off + c] = ldi_output_bias_init();
    }
    off += cout;
  }
}

void LdiNetwork::set_params(std::span<const double> p) {
  if (p.size() != params_.size()) {
    throw DimensionError(fmt::format("LDI expects {} parameters, got {}", params_.size(), p.size()));
  }
  std::copy(p.begin(), p.end(), params_.begin());
}

ScalarMap LdiNetwork::forward(const EventTensor& tensor) const {
  LdiBatch<double> batch(arch_, std::span<const EventTensor>(&tensor, 1));
  return batch.forward(params_).front();
}

// Activations live on a zero-padded grid, one (H+2)x(W+2) plane per input, stored as the
// rows of a column-major matrix with one column per channel. A 3x3 tap then becomes a
// constant row offset, and each convolution is nine small GEMMs on shifted row blocks.
template <class S>
struct LdiBatch<S>::State {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  LdiArchitecture arch;
  std::vector<LdiArchitecture::Layer> shapes;
  int width = 0;
  int height = 0;
  int count = 0;
  Eigen::Index pitch = 0;   // padded row length
  Eigen::Index plane = 0;   // padded pixels per input
  Eigen::Index rows = 0;    // padded pixels in the batch
  Eigen::Index margin = 0;  // guard rows so every shifted block stays in range
  std::vector<S> interior;  // 1 for real pixels, 0 for padding
  std::vector<Mat> acts;    // layer inputs, (rows + 2 margin) x cin
  std::vector<Mat> z;       // pre-activations, rows x cout
  std::vector<std::array<Mat, kTaps>> weights;  // per tap, cin x cout
  std::vector<Eigen::Matrix<S, 1, Eigen::Dynamic>> biases;
  std::vector<Mat> dz;  // output gradients per layer, padded like acts
  Mat da;
  bool have_forward = false;

  Eigen::Index tap_offset(int k) const { return (k / 3 - 1) * pitch + (k % 3 - 1); }
  Eigen::Index row_of(int n, int x, int y) const { return n * plane + (y + 1) * pitch + (x + 1); }

  void load_params(std::span<const double> p) {
    if (p.size() != arch.param_count()) {
      throw DimensionError(fmt::format("LDI expects {} parameters, got {}", arch.param_count(), p.size()));
    }
    std::size_t off = 0;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      const auto [cin, cout] = shapes[l];
      for (int k = 0; k < kTaps; ++k) {
        Mat& w = weights[l][k];
        w.resize(cin, cout);
        for (int co = 0; co < cout; ++co) {
          for (int ci = 0; ci < cin; ++ci) w(ci, co) = static_cast<S>(p[off + (co * cin + ci) * kTaps + k]);
        }
      }
      off += static_cast<std::size_t>(cout) * cin * kTaps;
      biases[l].resize(cout);
      for (int co = 0; co < cout; ++co) biases[l](co) = static_cast<S>(p[off + co]);
      off += cout;
    }
  }

  void convolve(std::size_t l) {
    Mat& out = z[l];
    out.resize(rows, shapes[l].cout);
    for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c).setConstant(biases[l](c));
    for (int k = 0; k < kTaps; ++k) {
      out.noalias() += acts[l].middleRows(margin + tap_offset(k), rows) * weights[l][k];
    }
  }
};

template <class S>
LdiBatch<S>::LdiBatch(const LdiArchitecture& arch, std::span<const EventTensor> inputs)
    : state_(std::make_unique<State>()) {
  arch.validate();
  if (inputs.empty()) throw DimensionError("LDI batch needs at least one input");
  State& st = *state_;
  st.arch = arch;
  st.shapes = arch.layer_shapes();
  st.width = inputs.front().width;
  st.height = inputs.front().height;
  st.count = static_cast<int>(inputs.size());
  st.pitch = st.width + 2;
  st.plane = st.pitch * (st.height + 2);
  st.rows = st.plane * st.count;
  st.margin = st.pitch + 1;
  st.interior.assign(static_cast<std::size_t>(st.rows), S(0));
  for (int n = 0; n < st.count; ++n) {
    for (int y = 0; y < st.height; ++y) {
      for (int x = 0; x < st.width; ++x) st.interior[st.row_of(n, x, y)] = S(1);
    }
  }
  st.acts.resize(st.shapes.size());
  st.z.resize(st.shapes.size());
  st.weights.resize(st.shapes.size());
  st.biases.resize(st.shapes.size());
  st.dz.resize(st.shapes.size());
  for (std::size_t l = 0; l < st.shapes.size(); ++l) {
    st.acts[l].setZero(st.rows + 2 * st.margin, st.shapes[l].cin);
    st.dz[l].setZero(st.rows + 2 * st.margin, st.shapes[l].cout);
  }
  const std::size_t pixels = static_cast<std::size_t>(st.width) * st.height;
  for (int n = 0; n < st.count; ++n) {
    const EventTensor& t = inputs[n];
    if (t.bins != arch.bins || t.width != st.width || t.height != st.height) {
      throw DimensionError(fmt::format("event tensor {}x{}x{} does not match the LDI input {}x{}x{}", t.bins, t.width,
                                       t.height, arch.bins, st.width, st.height));
    }
    for (int b = 0; b < arch.bins; ++b) {
      for (int y = 0; y < st.height; ++y) {
        for (int x = 0; x < st.width; ++x) {
          st.acts[0](st.margin + st.row_of(n, x, y), b) =
              static_cast<S>(t.values[b * pixels + static_cast<std::size_t>(y) * st.width + x]);
        }
      }
    }
  }
}

template <class S>
LdiBatch<S>::~LdiBatch() = default;
template <class S>
LdiBatch<S>::LdiBatch(LdiBatch&&) noexcept = default;
template <class S>
LdiBatch<S>& LdiBatch<S>::operator=(LdiBatch&&) noexcept = default;

template <class S>
std::vector<ScalarMap> LdiBatch<S>::forward(std::span<const double> params) {
  State& st = *state_;
  st.load_params(params);
  const S slope = static_cast<S>(st.arch.leaky_slope);
  const std::size_t last = st.shapes.size() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    st.convolve(l);
    if (l == last) break;
    auto next = st.acts[l + 1].middleRows(st.margin, st.rows);
    for (Eigen::Index c = 0; c < next.cols(); ++c) {
      const S* zc = st.z[l].col(c).data();
      S* ac = next.col(c).data();
      for (Eigen::Index r = 0; r < st.rows; ++r) ac[r] = st.interior[r] * (zc[r] > S(0) ? zc[r] : slope * zc[r]);
    }
  }
  std::vector<ScalarMap> out;
  for (int n = 0; n < st.count; ++n) {
    ScalarMap m(st.width, st.height);
    for (int y = 0; y < st.height; ++y) {
      for (int x = 0; x < st.width; ++x) m(x, y) = static_cast<double>(softplus(st.z[last](st.row_of(n, x, y), 0)));
    }
    out.push_back(std::move(m));
  }
  st.have_forward = true;
  return out;
}

template <class S>
std::vector<double> LdiBatch<S>::backward(std::span<const ScalarMap> grad_outputs) {
  State& st = *state_;
  if (!st.have_forward) throw NumericError("LDI backward called before forward");
  if (static_cast<int>(grad_outputs.size()) != st.count) throw DimensionError("one output gradient per input");
  const S slope = static_cast<S>(st.arch.leaky_slope);
  const std::size_t last = st.shapes.size() - 1;
  for (int n = 0; n < st.count; ++n) {
    for (int y = 0; y < st.height; ++y) {
      for (int x = 0; x < st.width; ++x) {
        const Eigen::Index r = st.row_of(n, x, y);
        st.dz[last](st.margin + r, 0) = static_cast<S>(grad_outputs[n](x, y)) * softplus_slope(st.z[last](r, 0));
      }
    }
  }
  std::vector<double> grad(st.arch.param_count(), 0.0);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& s : st.shapes) {
    offsets.push_back(off);
    off += static_cast<std::size_t>(s.cout) * (s.cin * kTaps + 1);
  }
  typename State::Mat dw;
  for (std::size_t l = last + 1; l-- > 0;) {
    const auto [cin, cout] = st.shapes[l];
    const auto dz = st.dz[l].middleRows(st.margin, st.rows);
    for (int k = 0; k < kTaps; ++k) {
      dw.noalias() = st.acts[l].middleRows(st.margin + st.tap_offset(k), st.rows).transpose() * dz;
      for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci) grad[offsets[l] + (co * cin + ci) * kTaps + k] = static_cast<double>(dw(ci, co));
      }
    }
    for (int co = 0; co < cout; ++co) {
      grad[offsets[l] + static_cast<std::size_t>(cout) * cin * kTaps + co] = static_cast<double>(dz.col(co).sum());
    }
    if (l == 0) break;
    st.da.resize(st.rows, cin);
    st.da.setZero();
    for (int k = 0; k < kTaps; ++k) {
      st.da.noalias() += st.dz[l].middleRows(st.margin - st.tap_offset(k), st.rows) * st.weights[l][k].transpose();
    }
    const typename State::Mat& zp = st.z[l - 1];
    for (Eigen::Index c = 0; c < cin; ++c) {
      const S* zc = zp.col(c).data();
      const S* gc = st.da.col(c).data();
      S* out = st.dz[l - 1].col(c).data() + st.margin;
      for (Eigen::Index r = 0; r < st.rows; ++r) out[r] = st.interior[r] * (zc[r] > S(0) ? gc[r] : slope * gc[r]);
    }
  }
  return grad;
}

template class LdiBatch<float>;
template class LdiBatch<double>;

std::pair<double, double> combine_weights(const SampleSchedule& schedule, Timestamp t_i) {
  schedule.index_of(t_i);
  const auto total = static_cast<double>(schedule.duration());
  const double w1 = static_cast<double>(t_i - schedule.times.front()) / total;
  return {w1, 1.0 - w1};
}

struct LdiFrameModel::State {
  struct FrameInputs {
    int back = -1;
    int fwd = -1;
    double w1 = 0.0;
    double w2 = 0.0;
  };
  Image blur;
  std::vector<FrameInputs> frames;
  std::variant<LdiBatch<float>, LdiBatch<double>> batch;
  std::vector<ScalarMap> integrals;
  FrameStack outputs;
  int window_count = 0;
};

namespace {

auto make_batch(const LdiArchitecture& arch, std::span<const EventTensor> windows, Precision precision)
    -> std::variant<LdiBatch<float>, LdiBatch<double>> {
  if (precision == Precision::single) return LdiBatch<float>(arch, windows);
  return LdiBatch<double>(arch, windows);
}

}  // namespace

LdiFrameModel::LdiFrameModel(const LdiArchitecture& arch, const BlurObservation& obs, const SampleSchedule& schedule,
                             Precision precision) {
  obs.validate();
  std::vector<EventTensor> windows;
  std::vector<State::FrameInputs> frames;
  const Timestamp t0 = schedule.times.front();
  const Timestamp tn = schedule.times.back();
  for (Timestamp t : schedule.times) {
    State::FrameInputs f;
    std::tie(f.w1, f.w2) = combine_weights(schedule, t);
    if (f.w1 > 0.0) {
      f.back = static_cast<int>(windows.size());
      windows.push_back(preprocess(obs.events, t, t0, arch.bins));
    }
    if (f.w2 > 0.0) {
      f.fwd = static_cast<int>(windows.size());
      windows.push_back(preprocess(obs.events, t, tn, arch.bins));
    }
    frames.push_back(f);
  }
  state_ = std::unique_ptr<State>(new State{obs.blur, std::move(frames), make_batch(arch, windows, precision), {}, {},
                                            static_cast<int>(windows.size())});
}

LdiFrameModel::~LdiFrameModel() = default;
LdiFrameModel::LdiFrameModel(LdiFrameModel&&) noexcept = default;
LdiFrameModel& LdiFrameModel::operator=(LdiFrameModel&&) noexcept = default;

FrameStack LdiFrameModel::forward(std::span<const double> params) {
  State& st = *state_;
  const std::vector<ScalarMap> out = std::visit([&](auto& b) { return b.forward(params); }, st.batch);
  st.integrals.clear();
  st.outputs.clear();
  for (const auto& f : st.frames) {
    ScalarMap e(st.blur.width(), st.blur.height());
    if (f.back >= 0) e += out[f.back] * f.w1;
    if (f.fwd >= 0) e += out[f.fwd] * f.w2;
    Image frame(e.width(), e.height());
    for (std::size_t i = 0; i < e.size(); ++i) frame[i] = std::clamp(st.blur[i] / e[i], 0.0, kEdiClampMax);
    st.integrals.push_back(std::move(e));
    st.outputs.push_back(std::move(frame));
  }
  return st.outputs;
}

std::vector<double> LdiFrameModel::backward(const FrameStack& grad_frames) {
  State& st = *state_;
  if (grad_frames.size() != st.frames.size()) throw DimensionError("one gradient per LDI frame required");
  std::vector<ScalarMap> grad_out(static_cast<std::size_t>(st.window_count),
                                  ScalarMap(st.blur.width(), st.blur.height()));
  for (std::size_t k = 0; k < st.frames.size(); ++k) {
    const auto& f = st.frames[k];
    const ScalarMap& e = st.integrals[k];
    ScalarMap ge(e.width(), e.height());
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double raw = st.blur[i] / e[i];
      if (raw > kEdiClampMax) continue;
      ge[i] = -grad_frames[k][i] * raw / e[i];
    }
    if (f.back >= 0) grad_out[f.back] += ge * f.w1;
    if (f.fwd >= 0) grad_out[f.fwd] += ge * f.w2;
  }
  return std::visit([&](auto& b) { return b.backward(grad_out); }, st.batch);
}

const std::vector<ScalarMap>& LdiFrameModel::integrals() const { return state_->integrals; }

ScalarMap combine(const LdiNetwork& net, const EventStream& stream, Timestamp t_i, const SampleSchedule& schedule,
                  const ExposureWindow& exposure) {
  if (!exposure.contains(t_i)) throw RangeError("combine: timestamp outside the exposure");
  const auto [w1, w2] = combine_weights(schedule, t_i);
  ScalarMap e(stream.width(), stream.height());
  const int bins = net.architecture().bins;
  if (w1 > 0.0) e += net.forward(preprocess(stream, t_i, schedule.times.front(), bins)) * w1;
  if (w2 > 0.0) e += net.forward(preprocess(stream, t_i, schedule.times.back(), bins)) * w2;
  return e;
}

FrameStack ldi_frames(const LdiNetwork& net, const BlurObservation& obs, const SampleSchedule& schedule) {
  LdiFrameModel model(net.architecture(), obs, schedule, Precision::dual);
  return model.forward(net.params());
}

LdiLoss ldi_loss_from_frames(const FrameStack& frames, const Image& blur, const EventEvidence& evidence,
                             std::span<const int> draws, const LossWeights& weights, double intensity_floor,
                             FrameStack* grad) {
  LdiLoss out;
  Image avg(blur.width(), blur.height());
  for (const Image& f : frames) avg += f;
  avg *= 1.0 / static_cast<double>(frames.size());
  Image g_avg;
  out.blur = composite_image_loss(avg, blur, weights.lambda_ssim, grad ? &g_avg : nullptr);
  out.ev = ev_loss(frames, evidence, draws, intensity_floor, grad);
  out.total = out.blur + weights.lambda * out.ev;
  if (grad) {
    for (Image& g : *grad) {
      g *= weights.lambda;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g_avg[i] / static_cast<double>(frames.size());
    }
  }
  return out;
}

LdiLoss ldi_loss(const LdiNetwork& net, const BlurObservation& obs, const SampleSchedule& schedule,
                 std::span<const int> draws, const LossWeights& weights, double intensity_floor) {
  const FrameStack frames = ldi_frames(net, obs, schedule);
  const EventEvidence evidence(obs.events, schedule, 1.0);
  return ldi_loss_from_frames(frames, obs.blur, evidence, draws, weights, intensity_floor);
}

}  // namespace evd
