#pragma once

// The spatio-temporal neural field: positional encoding of (x, y, z, t), an
// MLP with the query time concatenated into one late layer, and the residual
// prediction x_query = x + dx.

#include "neuralpci/autodiff.hpp"
#include "neuralpci/binary_io.hpp"
#include "neuralpci/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace neuralpci {

struct FieldConfig {
  /// Number of hidden layers of `width` units; an affine output layer to 3D
  /// motion follows them.
  int depth = 8;
  int width = 512;
  /// Highest sinusoid frequency exponent m in the encoding.
  int pe_order = 0;
  double activation_slope = autodiff::kDefaultSlope;
  /// Index of the affine layer whose input gets the query time appended.
  /// Layers are numbered 0..depth (depth is the output layer); -1 selects the
  /// default depth - 1, the last hidden layer.
  int time_injection_layer = -1;
  double final_layer_scale = 1e-2;
  /// Positionally encode the query time as well (off: the raw scalar).
  bool encode_query_time = false;
  /// Network input time per unit of window time (frame i enters as i * time_scale).
  double time_scale = 1.0;

  [[nodiscard]] int injection_layer() const {
    return time_injection_layer < 0 ? depth - 1 : time_injection_layer;
  }

  void validate() const {
    if (depth < 2) throw std::invalid_argument("field depth must be >= 2");
    if (width < 1) throw std::invalid_argument("field width must be >= 1");
    if (pe_order < 0) throw std::invalid_argument("pe_order must be >= 0");
    const int k = injection_layer();
    if (k < 1 || k > depth)
      throw std::invalid_argument("time_injection_layer must lie in [1, depth]");
    if (!(final_layer_scale >= 0.0)) throw std::invalid_argument("final_layer_scale must be >= 0");
    if (!(time_scale > 0.0) || !std::isfinite(time_scale)) throw std::invalid_argument("time_scale must be positive");
  }
};

/// Features emitted per scalar by the sinusoidal encoding of order m.
inline constexpr Eigen::Index encoding_width(int pe_order) { return 2 * (pe_order + 1) + 1; }

/// Length of the encoded (x, y, z, t) coordinate.
inline constexpr Eigen::Index encoded_dimension(int pe_order) { return 4 * encoding_width(pe_order); }

inline Eigen::Index query_dimension(const FieldConfig& c) {
  return c.encode_query_time ? encoding_width(c.pe_order) : 1;
}

/// Writes (c, sin c, cos c, sin 2c, cos 2c, ..., sin 2^m c, cos 2^m c).
inline void encode_scalar(double c, int pe_order, double* out) {
  out[0] = c;
  double freq = 1.0;
  for (int f = 0; f <= pe_order; ++f) {
    out[1 + 2 * f] = std::sin(freq * c);
    out[2 + 2 * f] = std::cos(freq * c);
    freq *= 2.0;
  }
}

/// Encodes a 4D coordinate component by component.
inline Vector positional_encode(const Eigen::Vector4d& coordinate, int pe_order) {
  const auto w = encoding_width(pe_order);
  Vector out(4 * w);
  for (int c = 0; c < 4; ++c) encode_scalar(coordinate[c], pe_order, out.data() + c * w);
  return out;
}

/// Encodes every column of `positions` paired with the shared time `t`.
inline Matrix encode_batch(const Points& positions, double t, int pe_order) {
  const auto w = encoding_width(pe_order);
  Matrix out(4 * w, positions.cols());
  for (Eigen::Index i = 0; i < positions.cols(); ++i) {
    double* col = out.col(i).data();
    for (int c = 0; c < 3; ++c) encode_scalar(positions(c, i), pe_order, col + c * w);
    encode_scalar(t, pe_order, col + 3 * w);
  }
  return out;
}

struct NeuralField {
  FieldConfig config;
  autodiff::ParamSet layers;
  autodiff::AdamState adam;
};

inline std::vector<autodiff::LayerShape> field_layer_shapes(const FieldConfig& c) {
  c.validate();
  std::vector<autodiff::LayerShape> dims;
  const Eigen::Index w = c.width;
  dims.push_back({encoded_dimension(c.pe_order), w});
  for (int l = 1; l < c.depth; ++l) dims.push_back({w, w});
  dims.push_back({w, 3});
  dims[static_cast<std::size_t>(c.injection_layer())].in_dim += query_dimension(c);
  return dims;
}

inline NeuralField make_field(const FieldConfig& config, std::uint64_t seed, double lr = 1e-3) {
  NeuralField f;
  f.config = config;
  const auto dims = field_layer_shapes(config);
  f.layers = autodiff::init_params(dims, seed, config.final_layer_scale);
  f.adam = autodiff::AdamState::for_params(f.layers, lr);
  return f;
}

/// Everything recorded by one batched field evaluation: a shared trunk over
/// the N points, then one branch per query time.
struct FieldTape {
  autodiff::Tape trunk;
  Matrix injected_input;  // trunk features feeding the injection layer
  std::vector<Matrix> injected_preact;
  std::vector<Vector> query_features;
  std::vector<autodiff::Tape> branches;
  std::uint64_t generation = 0;
  bool consumed = false;
};

struct FieldEvaluation {
  std::vector<Matrix> motions;  // one 3xN motion block per query time
  FieldTape tape;
};

inline Vector query_features(const FieldConfig& c, double query_time) {
  Vector q(query_dimension(c));
  const double t = query_time * c.time_scale;
  if (c.encode_query_time) {
    encode_scalar(t, c.pe_order, q.data());
  } else {
    q(0) = t;
  }
  return q;
}

inline std::uint64_t field_generation(const NeuralField& f) {
  return f.layers.empty() ? 0 : f.layers.front().generation;
}

inline void check_field(const NeuralField& field) {
  const auto dims = field_layer_shapes(field.config);
  if (field.layers.size() != dims.size()) throw ShapeError("field layer count does not match its config");
  for (std::size_t l = 0; l < dims.size(); ++l)
    if (field.layers[l].in_dim() != dims[l].in_dim || field.layers[l].out_dim() != dims[l].out_dim)
      throw ShapeError("field layer " + std::to_string(l) + " does not match its config");
}

/// Motions dx for every point of `positions` (field coordinates) taken from
/// `source_time` to each of `query_times`. Layers before the injection layer
/// do not see the query time, so they run once for all queries.
inline FieldEvaluation evaluate_field(const NeuralField& field, const Points& positions,
                                      double source_time, std::span<const double> query_times) {
  check_field(field);
  const auto& cfg = field.config;
  const double slope = cfg.activation_slope;
  const auto k = static_cast<std::size_t>(cfg.injection_layer());
  const auto depth = static_cast<std::size_t>(cfg.depth);

  FieldEvaluation ev;
  ev.tape.generation = field_generation(field);

  Matrix h = encode_batch(positions, source_time * cfg.time_scale, cfg.pe_order);
  for (std::size_t l = 0; l < k; ++l) {
    auto out = autodiff::linear_leakyrelu_forward(field.layers[l], h, true, slope);
    h = std::move(out.output);
    ev.tape.trunk.layers.push_back(std::move(out.record));
  }

  const auto& inj = field.layers[k];
  const Eigen::Index feat = h.rows();
  Matrix base;
  base.noalias() = inj.weights.leftCols(feat) * h;
  base.colwise() += inj.biases;
  const bool inj_activated = k < depth;

  for (double t : query_times) {
    Vector q = query_features(cfg, t);
    Matrix pre = base;
    pre.colwise() += inj.weights.rightCols(q.size()) * q;
    Matrix x = pre;
    if (inj_activated) autodiff::apply_leaky_relu(x, slope);
    autodiff::Tape branch;
    for (std::size_t l = k + 1; l <= depth; ++l) {
      auto out = autodiff::linear_leakyrelu_forward(field.layers[l], x, l < depth, slope);
      x = std::move(out.output);
      branch.layers.push_back(std::move(out.record));
    }
    ev.motions.push_back(std::move(x));
    ev.tape.injected_preact.push_back(std::move(pre));
    ev.tape.query_features.push_back(std::move(q));
    ev.tape.branches.push_back(std::move(branch));
  }
  ev.tape.injected_input = std::move(h);
  return ev;
}

/// Reverse pass of `evaluate_field`. `motion_grads[q]` is dLoss/d(dx) for
/// query q. Gradients w.r.t. the field parameters are summed into `grads`.
inline void backpropagate_field(const NeuralField& field, FieldTape& tape,
                                std::span<const Matrix> motion_grads, autodiff::GradSet& grads) {
  if (tape.consumed) throw std::logic_error("field tape already consumed");
  if (tape.generation != field_generation(field))
    throw std::logic_error("stale field tape: parameters changed since the forward pass");
  if (motion_grads.size() != tape.branches.size())
    throw ShapeError("one motion gradient block per query time is required");
  if (grads.size() != field.layers.size()) grads = autodiff::zero_grads(field.layers);

  const auto& cfg = field.config;
  const double slope = cfg.activation_slope;
  const auto k = static_cast<std::size_t>(cfg.injection_layer());
  const auto depth = static_cast<std::size_t>(cfg.depth);
  const auto& inj = field.layers[k];
  const Eigen::Index feat = tape.injected_input.rows();
  const Eigen::Index n = tape.injected_input.cols();

  Matrix pre_grad_sum = Matrix::Zero(inj.out_dim(), n);
  for (std::size_t q = 0; q < tape.branches.size(); ++q) {
    if (motion_grads[q].rows() != 3 || motion_grads[q].cols() != n)
      throw ShapeError("motion gradient block must be 3 x N");
    Matrix g = motion_grads[q];
    for (std::size_t l = depth; l > k; --l) {
      auto step = autodiff::backward(field.layers[l], tape.branches[q].layers[l - k - 1], g);
      grads[l].weights += step.params.weights;
      grads[l].biases += step.params.biases;
      g = std::move(step.input_grad);
    }
    if (k < depth) autodiff::leaky_relu_backward(tape.injected_preact[q], g, slope);
    const Vector row_sum = g.rowwise().sum();
    grads[k].weights.rightCols(tape.query_features[q].size()).noalias() +=
        row_sum * tape.query_features[q].transpose();
    pre_grad_sum += g;
  }
  grads[k].weights.leftCols(feat).noalias() += pre_grad_sum * tape.injected_input.transpose();
  grads[k].biases += pre_grad_sum.rowwise().sum();
  Matrix g;
  g.noalias() = inj.weights.leftCols(feat).transpose() * pre_grad_sum;

  for (std::size_t l = k; l-- > 0;) {
    auto step = autodiff::backward(field.layers[l], tape.trunk.layers[l], g);
    grads[l].weights += step.params.weights;
    grads[l].biases += step.params.biases;
    g = std::move(step.input_grad);
  }
  tape.consumed = true;
}

/// x + dx for every point of `cloud`, evaluated at `query_time` with the cloud
/// observed at `source_time`. Coordinates are used as given.
inline PointCloud field_forward(const NeuralField& field, const PointCloud& cloud, double source_time,
                                double query_time) {
  if (cloud.empty()) throw std::invalid_argument("field_forward needs a nonempty cloud");
  const double qt[] = {query_time};
  auto ev = evaluate_field(field, cloud.points, source_time, qt);
  PointCloud out(cloud.points + ev.motions.front(), query_time);
  if (!out.points.allFinite()) throw NumericError("field produced non-finite positions");
  return out;
}

/// Index of the frame time closest to `query_time`; ties go to the earlier frame.
inline std::size_t select_reference(std::span<const double> times, double query_time) {
  if (times.empty()) throw std::invalid_argument("select_reference needs at least one frame");
  std::size_t best = 0;
  double best_gap = std::abs(times[0] - query_time);
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double gap = std::abs(times[i] - query_time);
    if (gap < best_gap) {
      best = i;
      best_gap = gap;
    }
  }
  return best;
}

inline std::size_t select_reference(const InputWindow& window, double query_time) {
  const auto t = window.timestamps();
  return select_reference(t, query_time);
}

/// Maps a window's joint bounding box onto [-1, 1]^3 with one uniform scale.
struct Normalization {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;  // world units per field unit

  [[nodiscard]] Points to_field(const Points& p) const { return (p.colwise() - center) / scale; }
  [[nodiscard]] Points to_world(const Points& p) const { return (p * scale).colwise() + center; }

  static Normalization of(const InputWindow& window) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& f : window.frames) {
      if (f.empty()) continue;
      lo = lo.cwiseMin(f.points.rowwise().minCoeff());
      hi = hi.cwiseMax(f.points.rowwise().maxCoeff());
    }
    Normalization n;
    if (!lo.allFinite() || !hi.allFinite()) return n;
    n.center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo).maxCoeff();
    n.scale = half > 0.0 ? half : 1.0;
    return n;
  }
};

// Checkpoint layout (all integers and floats little-endian):
//   8 bytes   magic "NPCIFLD1"
//   u32       depth, width, pe_order, time_injection_layer (resolved)
//   u32       encode_query_time (0/1)
//   f64       activation_slope, final_layer_scale, time_scale
//   f64 x 4   normalization center (x, y, z) and scale
//   u32       layer count L
//   L times:  u32 out_dim, u32 in_dim, f64 weights (row-major), f64 biases
inline constexpr char kFieldMagic[8] = {'N', 'P', 'C', 'I', 'F', 'L', 'D', '1'};

inline void save_checkpoint(const std::string& path, const NeuralField& field,
                            const Normalization& norm = {}) {
  check_field(field);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kFieldMagic, 8);
  const auto& c = field.config;
  binio::write_u32(os, static_cast<std::uint32_t>(c.depth));
  binio::write_u32(os, static_cast<std::uint32_t>(c.width));
  binio::write_u32(os, static_cast<std::uint32_t>(c.pe_order));
  binio::write_u32(os, static_cast<std::uint32_t>(c.injection_layer()));
  binio::write_u32(os, c.encode_query_time ? 1u : 0u);
  binio::write_f64(os, c.activation_slope);
  binio::write_f64(os, c.final_layer_scale);
  binio::write_f64(os, c.time_scale);
  for (int i = 0; i < 3; ++i) binio::write_f64(os, norm.center[i]);
  binio::write_f64(os, norm.scale);
  binio::write_u32(os, static_cast<std::uint32_t>(field.layers.size()));
  for (const auto& layer : field.layers) {
    binio::write_u32(os, static_cast<std::uint32_t>(layer.out_dim()));
    binio::write_u32(os, static_cast<std::uint32_t>(layer.in_dim()));
    for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
      for (Eigen::Index col = 0; col < layer.in_dim(); ++col) binio::write_f64(os, layer.weights(r, col));
    for (Eigen::Index r = 0; r < layer.out_dim(); ++r) binio::write_f64(os, layer.biases(r));
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

inline std::pair<NeuralField, Normalization> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kFieldMagic)) throw ParseError(path + ": not a field checkpoint");
  NeuralField f;
  auto& c = f.config;
  c.depth = static_cast<int>(binio::read_u32(is));
  c.width = static_cast<int>(binio::read_u32(is));
  c.pe_order = static_cast<int>(binio::read_u32(is));
  c.time_injection_layer = static_cast<int>(binio::read_u32(is));
  c.encode_query_time = binio::read_u32(is) != 0;
  c.activation_slope = binio::read_f64(is);
  c.final_layer_scale = binio::read_f64(is);
  c.time_scale = binio::read_f64(is);
  Normalization norm;
  for (int i = 0; i < 3; ++i) norm.center[i] = binio::read_f64(is);
  norm.scale = binio::read_f64(is);
  const auto dims = field_layer_shapes(c);
  const auto count = binio::read_u32(is);
  if (count != dims.size()) throw ParseError(path + ": layer count does not match config");
  for (std::uint32_t l = 0; l < count; ++l) {
    const auto out = binio::read_u32(is);
    const auto in = binio::read_u32(is);
    if (out != dims[l].out_dim || in != dims[l].in_dim)
      throw ParseError(path + ": layer " + std::to_string(l) + " shape does not match config");
    autodiff::LayerParams p;
    p.weights.resize(out, in);
    p.biases.resize(out);
    for (Eigen::Index r = 0; r < p.weights.rows(); ++r)
      for (Eigen::Index col = 0; col < p.weights.cols(); ++col) p.weights(r, col) = binio::read_f64(is);
    for (Eigen::Index r = 0; r < p.biases.size(); ++r) p.biases(r) = binio::read_f64(is);
    f.layers.push_back(std::move(p));
  }
  if (!is) throw ParseError(path + ": truncated checkpoint");
  f.adam = autodiff::AdamState::for_params(f.layers);
  return {std::move(f), norm};
}

}  // namespace neuralpci
