#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace retarget::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

enum class OutputActivation : std::uint32_t { linear = 0, limit_squash = 1 };

// Squashed outputs stay this far (relative to the half range) inside the
// limits, so float rounding of a saturated tanh never lands on a bound.
inline constexpr double kSquashShrink = 1.0 - 1e-6;

// One dense layer: out = in * weight + bias, weight is (in x out).
template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;
  RowVector<Scalar> bias;
};

// Fully connected tanh network. Batch-major: inputs and outputs are
// (batch x features). With limit_squash the output is
// center + halfwidth * shrink * tanh(pre_activation), per output column.
template <typename Scalar>
struct MlpModel {
  std::vector<std::size_t> layer_dims;
  std::vector<DenseLayer<Scalar>> layers;
  OutputActivation output_activation = OutputActivation::linear;
  RowVector<Scalar> squash_center;
  RowVector<Scalar> squash_halfwidth;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t parameter_count() const;
  // Throws ShapeMismatchError / NonFiniteError when an invariant is broken.
  void validate() const;

  template <typename Other>
  MlpModel<Other> cast() const;

  friend bool operator==(const MlpModel& a, const MlpModel& b) {
    if (a.layer_dims != b.layer_dims || a.output_activation != b.output_activation ||
        a.layers.size() != b.layers.size() || a.squash_center != b.squash_center ||
        a.squash_halfwidth != b.squash_halfwidth) {
      return false;
    }
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      if (a.layers[l].weight != b.layers[l].weight || a.layers[l].bias != b.layers[l].bias) {
        return false;
      }
    }
    return true;
  }
};

struct SquashLimits {
  std::vector<double> min;
  std::vector<double> max;
};

// Glorot-uniform weights, zero biases. Deterministic per seed. `limits` is
// required for limit_squash outputs and must match the output width.
template <typename Scalar>
MlpModel<Scalar> mlp_init(std::span<const std::size_t> layer_dims, OutputActivation output,
                          std::uint64_t seed, const SquashLimits* limits = nullptr);

// Activations recorded by a forward pass, consumed by mlp_backward.
template <typename Scalar>
struct ForwardCache {
  const void* model = nullptr;
  std::vector<Matrix<Scalar>> activations;  // [0] = input, back() = output
  Matrix<Scalar> squash_tanh;               // tanh of the output pre-activation
};

// Throws ShapeMismatchError on width mismatch, NonFiniteError on non-finite input.
template <typename Scalar>
Matrix<Scalar> mlp_forward(const MlpModel<Scalar>& model, const Matrix<Scalar>& input,
                           ForwardCache<Scalar>* cache = nullptr);

template <typename Scalar>
struct GradientSet {
  std::vector<DenseLayer<Scalar>> layers;
  Matrix<Scalar> input;

  static GradientSet zeros_like(const MlpModel<Scalar>& model);
  GradientSet& operator+=(const GradientSet& other);
  bool all_finite() const;
};

// Exact reverse-mode gradients given dLoss/dOutput. Throws ShapeMismatchError
// when the cache was produced by a different model or batch.
template <typename Scalar>
GradientSet<Scalar> mlp_backward(const MlpModel<Scalar>& model, const ForwardCache<Scalar>& cache,
                                 const Matrix<Scalar>& upstream);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<DenseLayer<Scalar>> first_moment;
  std::vector<DenseLayer<Scalar>> second_moment;

  static AdamState for_model(const MlpModel<Scalar>& model, AdamConfig config = {});
};

// Bias-corrected Adam update in place. Non-finite gradients throw
// NonFiniteError and leave model and state untouched.
template <typename Scalar>
void adam_step(MlpModel<Scalar>& model, AdamState<Scalar>& state, const GradientSet<Scalar>& grads);

// Mutable view of a parameter block together with its analytic gradient.
struct ParameterBlock {
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool pass = false;
};

// Central differences on every parameter (a deterministic stride subsample
// when there are more than `max_checked`). Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradCheckReport finite_diff_check(std::span<const ParameterBlock> blocks,
                                  const std::function<double()>& loss, double tolerance,
                                  double step = 1e-4, std::size_t max_checked = 10000);

// Convenience form for a single network: `loss` returns the scalar loss and
// fills the gradients when given a non-null pointer.
using MlpLossFn = std::function<double(const MlpModel<double>&, GradientSet<double>*)>;
GradCheckReport finite_diff_check(const MlpLossFn& loss, MlpModel<double> model, double tolerance,
                                  double step = 1e-4);

// Parameter blocks of a model paired with the matching gradient blocks.
std::vector<ParameterBlock> parameter_blocks(MlpModel<double>& model,
                                             const GradientSet<double>& grads);

template <typename Scalar>
template <typename Other>
MlpModel<Other> MlpModel<Scalar>::cast() const {
  MlpModel<Other> out;
  out.layer_dims = layer_dims;
  out.output_activation = output_activation;
  out.squash_center = squash_center.template cast<Other>();
  out.squash_halfwidth = squash_halfwidth.template cast<Other>();
  for (const auto& l : layers) {
    out.layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>()});
  }
  return out;
}

}  // namespace retarget::nn
