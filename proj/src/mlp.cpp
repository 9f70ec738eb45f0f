#include "retarget/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "retarget/errors.hpp"
#include "retarget/rng.hpp"

namespace retarget::nn {

template <typename Scalar>
std::size_t MlpModel<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  }
  return n;
}

template <typename Scalar>
void MlpModel<Scalar>::validate() const {
  if (layer_dims.size() < 2 || layers.size() != layer_dims.size() - 1) {
    throw ShapeMismatchError("mlp: layer count does not match layer_dims");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (static_cast<std::size_t>(layer.weight.rows()) != layer_dims[l] ||
        static_cast<std::size_t>(layer.weight.cols()) != layer_dims[l + 1] ||
        static_cast<std::size_t>(layer.bias.size()) != layer_dims[l + 1]) {
      throw ShapeMismatchError("mlp: layer " + std::to_string(l) + " shape disagrees with dims");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw NonFiniteError("mlp: layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
  if (output_activation == OutputActivation::limit_squash &&
      (static_cast<std::size_t>(squash_center.size()) != output_dim() ||
       static_cast<std::size_t>(squash_halfwidth.size()) != output_dim())) {
    throw ShapeMismatchError("mlp: squash limits do not match the output width");
  }
}

template <typename Scalar>
MlpModel<Scalar> mlp_init(std::span<const std::size_t> layer_dims, OutputActivation output,
                          std::uint64_t seed, const SquashLimits* limits) {
  if (layer_dims.size() < 2) {
    throw ValidationError("mlp_init: need at least input and output dims");
  }
  if (std::any_of(layer_dims.begin(), layer_dims.end(), [](std::size_t d) { return d == 0; })) {
    throw ValidationError("mlp_init: every dim must be at least 1");
  }
  MlpModel<Scalar> model;
  model.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  model.output_activation = output;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t in = layer_dims[l];
    const std::size_t out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer<Scalar> layer{Matrix<Scalar>(in, out), RowVector<Scalar>::Zero(out)};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
    model.layers.push_back(std::move(layer));
  }
  if (output == OutputActivation::limit_squash) {
    const std::size_t out = layer_dims.back();
    if (limits == nullptr || limits->min.size() != out || limits->max.size() != out) {
      throw ValidationError("mlp_init: limit_squash output needs one [min, max] per output");
    }
    model.squash_center.resize(out);
    model.squash_halfwidth.resize(out);
    for (std::size_t k = 0; k < out; ++k) {
      if (!(limits->min[k] <= limits->max[k])) {
        throw ValidationError("mlp_init: squash limit min exceeds max");
      }
      model.squash_center[k] = static_cast<Scalar>(0.5 * (limits->min[k] + limits->max[k]));
      model.squash_halfwidth[k] = static_cast<Scalar>(0.5 * (limits->max[k] - limits->min[k]));
    }
  }
  return model;
}

template <typename Scalar>
Matrix<Scalar> mlp_forward(const MlpModel<Scalar>& model, const Matrix<Scalar>& input,
                           ForwardCache<Scalar>* cache) {
  if (static_cast<std::size_t>(input.cols()) != model.input_dim()) {
    throw ShapeMismatchError("mlp_forward: input width " + std::to_string(input.cols()) +
                             ", model expects " + std::to_string(model.input_dim()));
  }
  if (!input.allFinite()) {
    throw NonFiniteError("mlp_forward: non-finite input");
  }
  const std::size_t n_layers = model.layers.size();
  if (cache) {
    cache->model = &model;
    cache->activations.resize(n_layers + 1);
    cache->activations[0] = input;
  }
  Matrix<Scalar> h = input;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = model.layers[l];
    Matrix<Scalar> a = h * layer.weight;
    a.rowwise() += layer.bias;
    const bool last = l + 1 == n_layers;
    if (!last) {
      h = a.array().tanh().matrix();
    } else if (model.output_activation == OutputActivation::limit_squash) {
      Matrix<Scalar> t = a.array().tanh().matrix();
      const RowVector<Scalar> scale =
          model.squash_halfwidth * static_cast<Scalar>(kSquashShrink);
      h = (t.array().rowwise() * scale.array()).matrix();
      h.rowwise() += model.squash_center;
      if (cache) {
        cache->squash_tanh = std::move(t);
      }
    } else {
      h = std::move(a);
    }
    if (cache) {
      cache->activations[l + 1] = h;
    }
  }
  return h;
}

template <typename Scalar>
GradientSet<Scalar> GradientSet<Scalar>::zeros_like(const MlpModel<Scalar>& model) {
  GradientSet g;
  for (const auto& l : model.layers) {
    g.layers.push_back({Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                        RowVector<Scalar>::Zero(l.bias.size())});
  }
  return g;
}

template <typename Scalar>
GradientSet<Scalar>& GradientSet<Scalar>::operator+=(const GradientSet& other) {
  if (other.layers.size() != layers.size()) {
    throw ShapeMismatchError("gradient sets have different layer counts");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += other.layers[l].weight;
    layers[l].bias += other.layers[l].bias;
  }
  return *this;
}

template <typename Scalar>
bool GradientSet<Scalar>::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer<Scalar>& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

template <typename Scalar>
GradientSet<Scalar> mlp_backward(const MlpModel<Scalar>& model, const ForwardCache<Scalar>& cache,
                                 const Matrix<Scalar>& upstream) {
  const std::size_t n_layers = model.layers.size();
  if (cache.model != &model || cache.activations.size() != n_layers + 1) {
    throw ShapeMismatchError("mlp_backward: cache was produced by a different model");
  }
  const auto& out = cache.activations.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw ShapeMismatchError("mlp_backward: upstream gradient shape does not match the cache");
  }
  for (std::size_t l = 0; l <= n_layers; ++l) {
    if (static_cast<std::size_t>(cache.activations[l].cols()) != model.layer_dims[l]) {
      throw ShapeMismatchError("mlp_backward: stale cache (layer widths changed)");
    }
  }

  GradientSet<Scalar> grads;
  grads.layers.resize(n_layers);
  // delta = dLoss / d(pre-activation) of the current layer.
  Matrix<Scalar> delta;
  if (model.output_activation == OutputActivation::limit_squash) {
    const auto& t = cache.squash_tanh;
    const RowVector<Scalar> scale = model.squash_halfwidth * static_cast<Scalar>(kSquashShrink);
    delta = (upstream.array() * (Scalar(1) - t.array().square()) *
             scale.replicate(upstream.rows(), 1).array())
                .matrix();
  } else {
    delta = upstream;
  }
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& h_in = cache.activations[l];
    grads.layers[l].weight.noalias() = h_in.transpose() * delta;
    grads.layers[l].bias = delta.colwise().sum();
    Matrix<Scalar> d_in = delta * model.layers[l].weight.transpose();
    if (l > 0) {
      // h_in = tanh(a_in)
      delta = (d_in.array() * (Scalar(1) - h_in.array().square())).matrix();
    } else {
      grads.input = std::move(d_in);
    }
  }
  return grads;
}

template <typename Scalar>
AdamState<Scalar> AdamState<Scalar>::for_model(const MlpModel<Scalar>& model, AdamConfig config) {
  AdamState s;
  s.config = config;
  const auto zeros = GradientSet<Scalar>::zeros_like(model);
  s.first_moment = zeros.layers;
  s.second_moment = zeros.layers;
  return s;
}

template <typename Scalar>
void adam_step(MlpModel<Scalar>& model, AdamState<Scalar>& state,
               const GradientSet<Scalar>& grads) {
  if (grads.layers.size() != model.layers.size() ||
      state.first_moment.size() != model.layers.size()) {
    throw ShapeMismatchError("adam_step: gradient/state shapes do not match the model");
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (grads.layers[l].weight.rows() != model.layers[l].weight.rows() ||
        grads.layers[l].weight.cols() != model.layers[l].weight.cols() ||
        grads.layers[l].bias.size() != model.layers[l].bias.size()) {
      throw ShapeMismatchError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
    }
  }
  if (!grads.all_finite()) {
    throw NonFiniteError("adam_step: non-finite gradient, step rejected");
  }
  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(c.beta1);
  const Scalar b2 = static_cast<Scalar>(c.beta2);
  const Scalar corr1 = static_cast<Scalar>(1.0 - std::pow(c.beta1, t));
  const Scalar corr2 = static_cast<Scalar>(1.0 - std::pow(c.beta2, t));
  const Scalar lr = static_cast<Scalar>(c.lr);
  const Scalar eps = static_cast<Scalar>(c.epsilon);

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = (b2 * v.array() + (Scalar(1) - b2) * g.array().square()).matrix();
    param.array() -= lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    update(model.layers[l].weight, state.first_moment[l].weight, state.second_moment[l].weight,
           grads.layers[l].weight);
    update(model.layers[l].bias, state.first_moment[l].bias, state.second_moment[l].bias,
           grads.layers[l].bias);
  }
}

GradCheckReport finite_diff_check(std::span<const ParameterBlock> blocks,
                                  const std::function<double()>& loss, double tolerance,
                                  double step, std::size_t max_checked) {
  std::size_t total = 0;
  for (const auto& b : blocks) {
    if (b.values.size() != b.analytic.size()) {
      throw ShapeMismatchError("finite_diff_check: block and gradient sizes differ");
    }
    total += b.values.size();
  }
  const std::size_t stride = total > max_checked ? (total + max_checked - 1) / max_checked : 1;

  GradCheckReport report;
  std::size_t flat = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < b.values.size(); ++i, ++flat) {
      if (flat % stride != 0) {
        continue;
      }
      double& p = b.values[i];
      const double saved = p;
      p = saved + step;
      const double up = loss();
      p = saved - step;
      const double down = loss();
      p = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = b.analytic[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      if (!std::isfinite(rel)) {
        report.max_rel_error = std::numeric_limits<double>::infinity();
      } else {
        report.max_rel_error = std::max(report.max_rel_error, rel);
      }
      ++report.checked;
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

std::vector<ParameterBlock> parameter_blocks(MlpModel<double>& model,
                                             const GradientSet<double>& grads) {
  if (grads.layers.size() != model.layers.size()) {
    throw ShapeMismatchError("parameter_blocks: gradient/model layer counts differ");
  }
  std::vector<ParameterBlock> blocks;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    const auto& g = grads.layers[l];
    blocks.push_back({{layer.weight.data(), static_cast<std::size_t>(layer.weight.size())},
                      {g.weight.data(), static_cast<std::size_t>(g.weight.size())}});
    blocks.push_back({{layer.bias.data(), static_cast<std::size_t>(layer.bias.size())},
                      {g.bias.data(), static_cast<std::size_t>(g.bias.size())}});
  }
  return blocks;
}

GradCheckReport finite_diff_check(const MlpLossFn& loss, MlpModel<double> model, double tolerance,
                                  double step) {
  GradientSet<double> grads = GradientSet<double>::zeros_like(model);
  loss(model, &grads);
  const auto blocks = parameter_blocks(model, grads);
  return finite_diff_check(blocks, [&] { return loss(model, nullptr); }, tolerance, step);
}

#define RETARGET_INSTANTIATE_MLP(Scalar)                                                         \
  template struct MlpModel<Scalar>;                                                              \
  template struct GradientSet<Scalar>;                                                           \
  template struct AdamState<Scalar>;                                                             \
  template MlpModel<Scalar> mlp_init<Scalar>(std::span<const std::size_t>, OutputActivation,    \
                                             std::uint64_t, const SquashLimits*);                \
  template Matrix<Scalar> mlp_forward<Scalar>(const MlpModel<Scalar>&, const Matrix<Scalar>&,   \
                                              ForwardCache<Scalar>*);                            \
  template GradientSet<Scalar> mlp_backward<Scalar>(const MlpModel<Scalar>&,                    \
                                                    const ForwardCache<Scalar>&,                 \
                                                    const Matrix<Scalar>&);                      \
  template void adam_step<Scalar>(MlpModel<Scalar>&, AdamState<Scalar>&,                         \
                                  const GradientSet<Scalar>&);

RETARGET_INSTANTIATE_MLP(float)
RETARGET_INSTANTIATE_MLP(double)

}  // namespace retarget::nn
