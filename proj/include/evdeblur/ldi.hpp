#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "evdeblur/edi.hpp"
#include "evdeblur/event_core.hpp"
#include "evdeblur/losses.hpp"

namespace evd {

/// Polarity voted bilinearly into `bins` time slices of a window. A backward window
/// (t_from > t_to) is mirrored in time with reversed polarity, so every tensor reads as
/// a forward accumulation starting at t_from.
struct EventTensor {
  int bins = 5;
  int width = 0;
  int height = 0;
  Timestamp t_from = 0;
  Timestamp t_to = 0;
  bool backward = false;
  std::vector<double> values;  ///< bin-major, then row-major pixels

  double at(int b, int x, int y) const {
    return values[(static_cast<std::size_t>(b) * height + y) * width + x];
  }
  double total() const;
};

EventTensor preprocess(const EventStream& stream, Timestamp t_from, Timestamp t_to, int bins = 5);

struct LdiArchitecture {
  int bins = 5;
  int hidden = 16;
  int layers = 5;
  double leaky_slope = 0.1;

  struct Layer {
    int cin;
    int cout;
    friend bool operator==(const Layer&, const Layer&) = default;
  };
  std::vector<Layer> layer_shapes() const;
  std::size_t param_count() const;
  void validate() const;
};

/// Bias that makes the softplus output exactly 1 when the final pre-activation is the bias.
double ldi_output_bias_init();

/// Five 3x3 zero-padded convolutions; leaky rectifiers in between and a softplus at the end.
/// Parameters are stored flat, layer by layer: weights [cout][cin][3][3] then biases [cout].
class LdiNetwork {
 public:
  explicit LdiNetwork(const LdiArchitecture& arch = {}, std::uint64_t seed = 1);

  const LdiArchitecture& architecture() const { return arch_; }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  void set_params(std::span<const double> p);

  ScalarMap forward(const EventTensor& tensor) const;

 private:
  LdiArchitecture arch_;
  std::vector<double> params_;
};

/// Batched forward and reverse pass over a fixed set of same-sized tensors.
/// Scalar selects the arithmetic used inside the network (float or double).
template <class Scalar>
class LdiBatch {
 public:
  LdiBatch(const LdiArchitecture& arch, std::span<const EventTensor> inputs);
  ~LdiBatch();
  LdiBatch(LdiBatch&&) noexcept;
  LdiBatch& operator=(LdiBatch&&) noexcept;

  /// Runs the network on every input; outputs are kept for backward().
  std::vector<ScalarMap> forward(std::span<const double> params);
  /// Gradient of the loss w.r.t. parameters given d(loss)/d(output) per input.
  /// Uses the activations of the last forward() call.
  std::vector<double> backward(std::span<const ScalarMap> grad_outputs);

 private:
  struct State;
  std::unique_ptr<State> state_;
};

extern template class LdiBatch<float>;
extern template class LdiBatch<double>;

enum class Precision { single, dual };

/// Maps network parameters to the LDI frame stack of one observation:
/// frame_i = clamp(B / (w1 LDI(back_i) + w2 LDI(fwd_i)), 0, kEdiClampMax).
class LdiFrameModel {
 public:
  LdiFrameModel(const LdiArchitecture& arch, const BlurObservation& obs, const SampleSchedule& schedule,
                Precision precision = Precision::dual);
  ~LdiFrameModel();
  LdiFrameModel(LdiFrameModel&&) noexcept;
  LdiFrameModel& operator=(LdiFrameModel&&) noexcept;

  FrameStack forward(std::span<const double> params);
  /// Uses the state of the last forward() call.
  std::vector<double> backward(const FrameStack& grad_frames);
  /// Combined double integrals of the last forward() call.
  const std::vector<ScalarMap>& integrals() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// w1 = (t_i - t_0) / T and w2 = (t_2N - t_i) / T.
std::pair<double, double> combine_weights(const SampleSchedule& schedule, Timestamp t_i);

ScalarMap combine(const LdiNetwork& net, const EventStream& stream, Timestamp t_i, const SampleSchedule& schedule,
                  const ExposureWindow& exposure);

FrameStack ldi_frames(const LdiNetwork& net, const BlurObservation& obs, const SampleSchedule& schedule);

struct LdiLoss {
  double blur = 0.0;
  double ev = 0.0;
  double total = 0.0;
};

/// Blur term on the plain average of the LDI frames plus lambda times the event loss.
LdiLoss ldi_loss_from_frames(const FrameStack& frames, const Image& blur, const EventEvidence& evidence,
                             std::span<const int> draws, const LossWeights& weights, double intensity_floor,
                             FrameStack* grad = nullptr);
/// The event term is scale invariant, so no contrast threshold is needed.
LdiLoss ldi_loss(const LdiNetwork& net, const BlurObservation& obs, const SampleSchedule& schedule,
                 std::span<const int> draws, const LossWeights& weights,
                 double intensity_floor = 1e-3);

}  // namespace evd
