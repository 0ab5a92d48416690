#pragma once

// Dense-layer reverse-mode differentiation and Adam, sized for a coordinate
// MLP evaluated over a batch of points. Batches are column-major: each column
// of an input matrix is one sample.

#include "neuralpci/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace neuralpci::autodiff {

struct LayerShape {
  Eigen::Index in_dim = 0;
  Eigen::Index out_dim = 0;
};

/// Weights (out x in) and biases of one affine map. `generation` is bumped
/// by every optimizer update so recorded tapes can detect staleness.
struct LayerParams {
  Matrix weights;
  Vector biases;
  std::uint64_t generation = 0;

  [[nodiscard]] Eigen::Index in_dim() const { return weights.cols(); }
  [[nodiscard]] Eigen::Index out_dim() const { return weights.rows(); }
};

struct LayerGrads {
  Matrix weights;
  Vector biases;

  static LayerGrads zeros_like(const LayerParams& p) {
    return {Matrix::Zero(p.out_dim(), p.in_dim()), Vector::Zero(p.out_dim())};
  }
};

using ParamSet = std::vector<LayerParams>;
using GradSet = std::vector<LayerGrads>;

inline GradSet zero_grads(const ParamSet& params) {
  GradSet g;
  g.reserve(params.size());
  for (const auto& p : params) g.push_back(LayerGrads::zeros_like(p));
  return g;
}

inline std::size_t parameter_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += static_cast<std::size_t>(p.weights.size() + p.biases.size());
  return n;
}

inline constexpr double kDefaultSlope = 0.01;

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

/// In-place LeakyReLU over a matrix.
inline void apply_leaky_relu(Eigen::Ref<Matrix> m, double slope) {
  m = m.unaryExpr([slope](double x) { return leaky_relu(x, slope); });
}

/// Multiplies `grad` by the LeakyReLU derivative evaluated at `preact`.
inline void leaky_relu_backward(const Eigen::Ref<const Matrix>& preact, Eigen::Ref<Matrix> grad,
                                double slope) {
  grad = grad.binaryExpr(preact, [slope](double g, double z) { return z > 0.0 ? g : slope * g; });
}

/// What one layer's backward pass needs from its forward pass.
struct LayerRecord {
  Matrix input;
  Matrix preact;
  bool activated = false;
  double slope = kDefaultSlope;
  std::uint64_t generation = 0;
  Eigen::Index in_dim = 0;
  Eigen::Index out_dim = 0;
  bool consumed = false;
};

struct LayerOutput {
  Matrix output;
  LayerRecord record;
};

inline void check_layer(const LayerParams& params) {
  if (params.in_dim() < 1 || params.out_dim() < 1)
    throw ShapeError("layer dimensions must be at least 1");
  if (params.biases.size() != params.out_dim())
    throw ShapeError("bias length must equal layer output dimension");
}

/// y = act(W x + b) for every column x of `input`; the activation is skipped
/// when `apply_activation` is false.
inline LayerOutput linear_leakyrelu_forward(const LayerParams& params, const Matrix& input,
                                            bool apply_activation, double slope = kDefaultSlope) {
  check_layer(params);
  if (input.rows() != params.in_dim())
    throw ShapeError("layer input has dimension " + std::to_string(input.rows()) + ", expected " +
                     std::to_string(params.in_dim()));
  LayerOutput out;
  out.record.preact.noalias() = params.weights * input;
  out.record.preact.colwise() += params.biases;
  out.output = out.record.preact;
  if (apply_activation) apply_leaky_relu(out.output, slope);
  out.record.input = input;
  out.record.activated = apply_activation;
  out.record.slope = slope;
  out.record.generation = params.generation;
  out.record.in_dim = params.in_dim();
  out.record.out_dim = params.out_dim();
  return out;
}

struct LayerBackward {
  LayerGrads params;
  Matrix input_grad;
};

/// Reverse-mode step through one recorded layer. Gradients are summed over
/// the batch. A record can be replayed once, and only against the exact
/// parameter generation that produced it.
inline LayerBackward backward(const LayerParams& params, LayerRecord& record,
                              const Matrix& output_grad) {
  if (record.consumed) throw std::logic_error("layer record already consumed by a backward pass");
  if (record.generation != params.generation || record.in_dim != params.in_dim() ||
      record.out_dim != params.out_dim())
    throw std::logic_error("stale layer record: parameters changed since the forward pass");
  if (output_grad.rows() != record.out_dim || output_grad.cols() != record.preact.cols())
    throw ShapeError("output gradient shape does not match the recorded layer output");

  Matrix grad = output_grad;
  if (record.activated) leaky_relu_backward(record.preact, grad, record.slope);

  LayerBackward out;
  out.params.weights.noalias() = grad * record.input.transpose();
  out.params.biases = grad.rowwise().sum();
  out.input_grad.noalias() = params.weights.transpose() * grad;
  record.consumed = true;
  record.input.resize(0, 0);
  record.preact.resize(0, 0);
  return out;
}

/// Per-layer records of one multilayer forward pass.
struct Tape {
  std::vector<LayerRecord> layers;
};

/// Plain MLP: LeakyReLU on every layer except the last.
inline std::pair<Matrix, Tape> mlp_forward(const ParamSet& params, const Matrix& input,
                                           double slope = kDefaultSlope) {
  if (params.empty()) throw ShapeError("empty parameter set");
  Tape tape;
  tape.layers.reserve(params.size());
  Matrix x = input;
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto out = linear_leakyrelu_forward(params[l], x, l + 1 < params.size(), slope);
    x = std::move(out.output);
    tape.layers.push_back(std::move(out.record));
  }
  return {std::move(x), std::move(tape)};
}

inline std::pair<GradSet, Matrix> mlp_backward(const ParamSet& params, Tape& tape,
                                               const Matrix& output_grad) {
  if (tape.layers.size() != params.size())
    throw std::logic_error("tape depth does not match the network depth");
  GradSet grads(params.size());
  Matrix g = output_grad;
  for (std::size_t l = params.size(); l-- > 0;) {
    auto step = backward(params[l], tape.layers[l], g);
    grads[l] = std::move(step.params);
    g = std::move(step.input_grad);
  }
  return {std::move(grads), std::move(g)};
}

/// Adam with bias correction. Moments mirror the parameter shapes.
struct AdamState {
  GradSet first_moment;
  GradSet second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const ParamSet& params, double lr = 1e-3) {
    AdamState s;
    s.first_moment = zero_grads(params);
    s.second_moment = zero_grads(params);
    s.lr = lr;
    return s;
  }
};

inline void adam_step(ParamSet& params, const GradSet& grads, AdamState& state) {
  if (grads.size() != params.size()) throw ShapeError("gradient set size differs from parameters");
  if (state.first_moment.empty()) {
    state.first_moment = zero_grads(params);
    state.second_moment = zero_grads(params);
  }
  if (state.first_moment.size() != params.size())
    throw ShapeError("optimizer state does not match the parameter set");
  for (std::size_t l = 0; l < params.size(); ++l) {
    if (grads[l].weights.rows() != params[l].out_dim() ||
        grads[l].weights.cols() != params[l].in_dim() ||
        grads[l].biases.size() != params[l].out_dim())
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(l));
    if (!grads[l].weights.allFinite() || !grads[l].biases.allFinite())
      throw NumericError("non-finite gradient at layer " + std::to_string(l));
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, lr = state.lr, eps = state.epsilon;

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weights, grads[l].weights, state.first_moment[l].weights,
           state.second_moment[l].weights);
    update(params[l].biases, grads[l].biases, state.first_moment[l].biases,
           state.second_moment[l].biases);
    ++params[l].generation;
  }
}

/// Fan-in scaled uniform initialization, std sqrt(2 / fan_in) for weights and
/// bound 1/sqrt(fan_in) for biases. The last layer is multiplied by
/// `final_layer_scale`.
inline ParamSet init_params(std::span<const LayerShape> layer_dims, std::uint64_t seed,
                            double final_layer_scale) {
  if (layer_dims.empty()) throw std::invalid_argument("layer_dims must be nonempty");
  if (!(final_layer_scale >= 0.0)) throw std::invalid_argument("final_layer_scale must be >= 0");
  std::mt19937_64 rng(seed);
  ParamSet params;
  params.reserve(layer_dims.size());
  for (std::size_t l = 0; l < layer_dims.size(); ++l) {
    const auto [in, out] = layer_dims[l];
    if (in < 1 || out < 1) throw ShapeError("layer dimensions must be at least 1");
    const double fan_in = static_cast<double>(in);
    std::uniform_real_distribution<double> w_dist(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    std::uniform_real_distribution<double> b_dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    LayerParams p;
    p.weights.resize(out, in);
    p.biases.resize(out);
    // Row-major fill order so the draw sequence does not depend on storage.
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) p.weights(r, c) = w_dist(rng);
    for (Eigen::Index r = 0; r < out; ++r) p.biases(r) = b_dist(rng);
    if (l + 1 == layer_dims.size()) {
      p.weights *= final_layer_scale;
      p.biases *= final_layer_scale;
    }
    params.push_back(std::move(p));
  }
  return params;
}

}  // namespace neuralpci::autodiff
