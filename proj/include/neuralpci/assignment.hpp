#pragma once

// Balanced assignment between two equal-size point sets: an exact
// shortest-augmenting-path Hungarian solver and an entropy-regularized
// (Sinkhorn) approximation.

#include "neuralpci/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace neuralpci {

struct Assignment {
  std::vector<std::size_t> row_to_col;
  double total_cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix, O(n^3).
inline Assignment solve_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw ShapeError("assignment cost matrix must be square");
  const auto n = static_cast<std::size_t>(cost.rows());
  Assignment out;
  if (n == 0) return out;
  constexpr double inf = std::numeric_limits<double>::infinity();

  // 1-based potentials; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match_col(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match_col[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[col0] = 1;
      const std::size_t r0 = match_col[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost(static_cast<Eigen::Index>(r0 - 1), static_cast<Eigen::Index>(c - 1)) -
                           u[r0] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match_col[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match_col[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match_col[col0] = match_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  out.row_to_col.assign(n, 0);
  for (std::size_t c = 1; c <= n; ++c) out.row_to_col[match_col[c] - 1] = c - 1;
  for (std::size_t r = 0; r < n; ++r)
    out.total_cost += cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(out.row_to_col[r]));
  return out;
}

struct SinkhornSettings {
  /// Final regularization, relative to the mean entry of the cost matrix.
  double epsilon = 1e-3;
  /// Geometric annealing factor applied to epsilon between stages.
  double anneal = 0.5;
  int max_iters_per_stage = 200;
  /// Stop a stage when the worst column-marginal error drops below this
  /// fraction of the target mass 1/n.
  double tolerance = 1e-6;
};

struct TransportPlan {
  Matrix plan;  // rows and columns each sum to 1/n
  double cost = 0.0;
  double epsilon = 0.0;
};

/// Log-domain Sinkhorn with epsilon annealing between uniform marginals.
/// The plan's cost exceeds the exact assignment cost (divided by n) by at most
/// about epsilon * log(n) plus the residual marginal error.
inline TransportPlan sinkhorn(const Matrix& cost, const SinkhornSettings& s = {}) {
  if (cost.rows() != cost.cols() || cost.rows() == 0)
    throw ShapeError("transport cost matrix must be square and nonempty");
  const Eigen::Index n = cost.rows();
  const double log_mass = -std::log(static_cast<double>(n));
  const double scale = std::max(cost.mean(), std::numeric_limits<double>::min());
  const double eps_final = s.epsilon * scale;
  double eps = std::max(cost.maxCoeff(), eps_final);

  Vector f = Vector::Zero(n), g = Vector::Zero(n);
  auto row_update = [&](double e) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) m = std::max(m, (g(j) - cost(i, j)) / e);
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) acc += std::exp((g(j) - cost(i, j)) / e - m);
      f(i) = e * (log_mass - m - std::log(acc));
    }
  };
  auto col_update = [&](double e) -> double {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, (f(i) - cost(i, j)) / e);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) acc += std::exp((f(i) - cost(i, j)) / e - m);
      const double gj = e * (log_mass - m - std::log(acc));
      // Column mass before this update, relative to 1/n.
      worst = std::max(worst, std::abs(std::exp((g(j) - gj) / e) - 1.0));
      g(j) = gj;
    }
    return worst;
  };

  while (true) {
    for (int it = 0; it < s.max_iters_per_stage; ++it) {
      row_update(eps);
      if (col_update(eps) < s.tolerance) break;
    }
    if (eps <= eps_final) break;
    eps = std::max(eps * s.anneal, eps_final);
  }
  row_update(eps);

  TransportPlan out;
  out.epsilon = eps;
  out.plan.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out.plan(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / eps);
  out.cost = out.plan.cwiseProduct(cost).sum();
  return out;
}

}  // namespace neuralpci
