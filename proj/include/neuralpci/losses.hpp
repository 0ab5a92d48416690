#pragma once

// Point set losses (Chamfer, Earth Mover's, kNN smoothness) and the weighted
// all-pairs objective over an input window. Matches and assignments are held
// fixed while differentiating; they are recomputed on every evaluation.

#include "neuralpci/assignment.hpp"
#include "neuralpci/field.hpp"
#include "neuralpci/spatial.hpp"
#include "neuralpci/types.hpp"

#include <string>
#include <vector>

namespace neuralpci {

enum class EmdMode { automatic, exact, approximate };

struct LossConfig {
  double alpha = 1.0;  // Chamfer
  double beta = 0.0;   // Earth Mover's
  double gamma = 1.0;  // smoothness
  int smooth_k = 9;
  EmdMode emd_mode = EmdMode::automatic;
  /// Point count up to which `automatic` uses the exact solver.
  std::size_t emd_exact_limit = 256;
  double emd_epsilon = 1e-3;
  /// Include the (i, i) self-reconstruction pairs in the all-pairs sum.
  bool include_self_pairs = true;

  void validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw std::invalid_argument("loss weights must be >= 0");
    if (!(alpha > 0.0 || beta > 0.0 || gamma > 0.0))
      throw std::invalid_argument("at least one loss weight must be positive");
    if (smooth_k < 1) throw std::invalid_argument("smooth_k must be >= 1");
    if (!(emd_epsilon > 0.0)) throw std::invalid_argument("emd_epsilon must be positive");
  }

  static LossConfig indoor() { return {1.0, 50.0, 0.0}; }
  static LossConfig outdoor() { return {1.0, 0.0, 1.0}; }
};

/// A scalar loss plus its gradient w.r.t. the differentiated argument.
struct LossValue {
  double value = 0.0;
  Points grad;
};

namespace detail {

/// Mean over `from` of the squared distance to the nearest point of `to_index`.
/// Adds the gradient w.r.t. `from` (if `grad_from`) or w.r.t. the matched
/// points of the indexed cloud (if `grad_to`).
inline double directed_chamfer(const Points& from, const NeighborIndex& to_index, Points* grad_from,
                               Points* grad_to) {
  const auto n = from.cols();
  const double w = 2.0 / static_cast<double>(n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = from.col(i);
    const auto nn = to_index.nearest(p);
    sum += nn.sq_dist;
    const auto j = static_cast<Eigen::Index>(nn.index);
    if (grad_from) grad_from->col(i) += w * (p - to_index.points().col(j));
    if (grad_to) grad_to->col(j) += w * (to_index.points().col(j) - p);
  }
  return sum / static_cast<double>(n);
}

}  // namespace detail

/// Symmetric Chamfer distance with the target tree prebuilt; gradient w.r.t. `q`.
inline LossValue chamfer(const NeighborIndex& p_index, const Points& q) {
  if (p_index.size() == 0 || q.cols() == 0) throw std::invalid_argument("chamfer needs nonempty clouds");
  LossValue out;
  out.grad = Points::Zero(3, q.cols());
  const NeighborIndex q_index(q);
  const double forward = detail::directed_chamfer(p_index.points(), q_index, nullptr, &out.grad);
  const double backward = detail::directed_chamfer(q, p_index, &out.grad, nullptr);
  out.value = forward + backward;
  return out;
}

inline LossValue chamfer(const Points& p, const Points& q) {
  if (p.cols() == 0 || q.cols() == 0) throw std::invalid_argument("chamfer needs nonempty clouds");
  return chamfer(NeighborIndex(p), q);
}

inline LossValue chamfer(const PointCloud& p, const PointCloud& q) { return chamfer(p.points, q.points); }

inline Matrix pairwise_squared_distances(const Points& p, const Points& q) {
  Matrix c(p.cols(), q.cols());
  for (Eigen::Index i = 0; i < p.cols(); ++i)
    for (Eigen::Index j = 0; j < q.cols(); ++j) c(i, j) = squared_distance(p.col(i).data(), q.col(j).data());
  return c;
}

/// Mean squared matched distance under the optimal bijection; gradient w.r.t. `q`.
inline LossValue emd(const Points& p, const Points& q, const LossConfig& config = {}) {
  if (p.cols() != q.cols()) throw ShapeError("emd needs clouds with equal point counts");
  if (p.cols() == 0) throw std::invalid_argument("emd needs nonempty clouds");
  const auto n = p.cols();
  const Matrix cost = pairwise_squared_distances(p, q);
  const bool exact = config.emd_mode == EmdMode::exact ||
                     (config.emd_mode == EmdMode::automatic &&
                      static_cast<std::size_t>(n) <= config.emd_exact_limit);
  LossValue out;
  out.grad = Points::Zero(3, n);
  if (exact) {
    const auto a = solve_assignment(cost);
    out.value = a.total_cost / static_cast<double>(n);
    const double w = 2.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j = static_cast<Eigen::Index>(a.row_to_col[static_cast<std::size_t>(i)]);
      out.grad.col(j) += w * (q.col(j) - p.col(i));
    }
  } else {
    SinkhornSettings s;
    s.epsilon = config.emd_epsilon;
    const auto t = sinkhorn(cost, s);
    out.value = t.cost;
    // d/dq_j of sum_ij P_ij |p_i - q_j|^2 = 2 sum_i P_ij (q_j - p_i)
    const Vector col_mass = t.plan.colwise().sum().transpose();
    out.grad = 2.0 * (q.array().rowwise() * col_mass.transpose().array()).matrix() - 2.0 * p * t.plan;
  }
  return out;
}

inline LossValue emd(const PointCloud& p, const PointCloud& q, const LossConfig& config = {}) {
  return emd(p.points, q.points, config);
}

/// Fixed k-neighborhoods (self excluded) of a reference cloud.
struct SmoothnessNeighbors {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // N x k, row-major

  static SmoothnessNeighbors of(const Points& positions, std::size_t k) {
    const auto n = static_cast<std::size_t>(positions.cols());
    if (k < 1) throw std::invalid_argument("smoothness k must be >= 1");
    if (n <= k) throw std::invalid_argument("smoothness needs more points than k");
    SmoothnessNeighbors s;
    s.k = k;
    s.indices.reserve(n * k);
    const NeighborIndex index(positions);
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& nb : index.knn_excluding_self(i, k)) s.indices.push_back(nb.index);
    return s;
  }
};

/// Sum over points of the mean squared motion difference to each neighbor;
/// gradient w.r.t. `motions`.
inline LossValue smoothness(const SmoothnessNeighbors& nbrs, const Points& motions) {
  const auto n = motions.cols();
  if (nbrs.indices.size() != static_cast<std::size_t>(n) * nbrs.k)
    throw ShapeError("motion count does not match the neighborhood table");
  LossValue out;
  out.grad = Points::Zero(3, n);
  const double inv_k = 1.0 / static_cast<double>(nbrs.k);
  for (Eigen::Index i = 0; i < n; ++i) {
    double inner = 0.0;
    for (std::size_t a = 0; a < nbrs.k; ++a) {
      const auto j = static_cast<Eigen::Index>(nbrs.indices[static_cast<std::size_t>(i) * nbrs.k + a]);
      const Vec3 d = motions.col(j) - motions.col(i);
      inner += d.squaredNorm();
      out.grad.col(j) += 2.0 * inv_k * d;
      out.grad.col(i) -= 2.0 * inv_k * d;
    }
    out.value += inner * inv_k;
  }
  return out;
}

inline LossValue smoothness(const Points& positions, const Points& motions, std::size_t k) {
  if (positions.cols() != motions.cols()) throw ShapeError("one motion vector per point is required");
  return smoothness(SmoothnessNeighbors::of(positions, k), motions);
}

struct PairLoss {
  std::size_t reference = 0;  // i
  std::size_t target = 0;     // j
  double cd = 0.0, emd = 0.0, smooth = 0.0, total = 0.0;
};

struct LossBreakdown {
  double cd = 0.0, emd = 0.0, smooth = 0.0, total = 0.0;
  std::vector<PairLoss> pairs;
};

/// Per-window state that never changes during optimization: normalized
/// frames, their times on the field axis, target trees and neighborhoods.
struct LossContext {
  std::vector<Points> frames;
  std::vector<double> times;
  std::vector<NeighborIndex> target_index;
  std::vector<SmoothnessNeighbors> neighbors;

  static LossContext build(std::vector<Points> frames, std::vector<double> times, const LossConfig& cfg) {
    cfg.validate();
    if (frames.size() < 2) throw std::invalid_argument("total loss needs at least 2 frames");
    if (frames.size() != times.size()) throw ShapeError("one time per frame is required");
    LossContext ctx;
    for (const auto& f : frames) {
      ctx.target_index.emplace_back(f);
      if (cfg.gamma > 0.0) ctx.neighbors.push_back(SmoothnessNeighbors::of(f, static_cast<std::size_t>(cfg.smooth_k)));
    }
    ctx.frames = std::move(frames);
    ctx.times = std::move(times);
    return ctx;
  }
};

struct TotalLoss {
  LossBreakdown breakdown;
  autodiff::GradSet grads;
};

/// Sum over every reference frame i and target time t_j of
/// alpha*CD(P_j, P^_i(t_j)) + beta*EMD(P_j, P^_i(t_j)) + gamma*S(P_i, dx_ij).
inline TotalLoss total_loss(const NeuralField& field, const LossContext& ctx, const LossConfig& cfg) {
  const std::size_t m = ctx.frames.size();
  TotalLoss out;
  out.grads = autodiff::zero_grads(field.layers);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> queries;
    std::vector<std::size_t> targets;
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j && !cfg.include_self_pairs) continue;
      queries.push_back(ctx.times[j]);
      targets.push_back(j);
    }
    if (queries.empty()) continue;
    auto ev = evaluate_field(field, ctx.frames[i], ctx.times[i], queries);
    std::vector<Matrix> motion_grads;
    motion_grads.reserve(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const std::size_t j = targets[q];
      const Points& motion = ev.motions[q];
      const Points predicted = ctx.frames[i] + motion;
      PairLoss pl{i, j};
      Points g = Points::Zero(3, motion.cols());
      if (cfg.alpha > 0.0) {
        auto cd = chamfer(ctx.target_index[j], predicted);
        pl.cd = cd.value;
        g += cfg.alpha * cd.grad;
      }
      if (cfg.beta > 0.0) {
        auto e = emd(ctx.frames[j], predicted, cfg);
        pl.emd = e.value;
        g += cfg.beta * e.grad;
      }
      if (cfg.gamma > 0.0) {
        auto s = smoothness(ctx.neighbors[i], motion);
        pl.smooth = s.value;
        g += cfg.gamma * s.grad;
      }
      pl.total = cfg.alpha * pl.cd + cfg.beta * pl.emd + cfg.gamma * pl.smooth;
      out.breakdown.cd += pl.cd;
      out.breakdown.emd += pl.emd;
      out.breakdown.smooth += pl.smooth;
      out.breakdown.total += pl.total;
      out.breakdown.pairs.push_back(pl);
      motion_grads.push_back(std::move(g));
    }
    backpropagate_field(field, ev.tape, motion_grads, out.grads);
  }
  return out;
}

}  // namespace neuralpci
