#pragma once

// Shared fixtures and brute-force reference implementations for the tests.

#include "neuralpci/neuralpci.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace testing_support {

using namespace neuralpci;

inline Points random_points(Eigen::Index n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Points p(3, n);
  for (Eigen::Index i = 0; i < n; ++i) p.col(i) = Vec3(u(rng), u(rng), u(rng));
  return p;
}

/// Points on the surface of the axis-aligned box with the given half extents.
inline Points box_surface(Eigen::Index n, std::uint64_t seed, const Vec3& half = Vec3::Constant(0.5)) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> face(0, 5);
  Points p(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 x(u(rng), u(rng), u(rng));
    const int f = face(rng);
    x[f / 2] = f % 2 ? 1.0 : -1.0;
    p.col(i) = x.cwiseProduct(half);
  }
  return p;
}

/// Exhaustive k nearest neighbors, ascending by distance then index.
inline std::vector<Neighbor> brute_knn(const Points& pts, const Vec3& q, std::size_t k,
                                       std::ptrdiff_t skip = -1) {
  std::vector<Neighbor> all;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    if (i == skip) continue;
    const Vec3 p = pts.col(i);
    all.push_back({static_cast<std::size_t>(i), squared_distance(p, q)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  });
  all.resize(std::min(k, all.size()));
  return all;
}

/// O(N^2) symmetric Chamfer distance, accumulated in point order.
inline double brute_chamfer(const Points& p, const Points& q) {
  auto directed = [](const Points& a, const Points& b) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
      double best = INFINITY;
      for (Eigen::Index j = 0; j < b.cols(); ++j)
        best = std::min(best, squared_distance(a.col(i).data(), b.col(j).data()));
      sum += best;
    }
    return sum / static_cast<double>(a.cols());
  };
  return directed(p, q) + directed(q, p);
}

/// Minimum mean matched squared distance over every bijection (small n only).
inline double brute_emd(const Points& p, const Points& q) {
  std::vector<int> perm(static_cast<std::size_t>(p.cols()));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      s += squared_distance(p.col(static_cast<Eigen::Index>(i)).data(), q.col(perm[i]).data());
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(p.cols());
}

/// Smoothness with neighborhoods from exhaustive search.
inline double brute_smoothness(const Points& pos, const Points& motion, std::size_t k) {
  double total = 0.0;
  const double inv_k = 1.0 / static_cast<double>(k);
  for (Eigen::Index i = 0; i < pos.cols(); ++i) {
    const auto nn = brute_knn(pos, pos.col(i), k, i);
    double inner = 0.0;
    for (const auto& n : nn) inner += (motion.col(static_cast<Eigen::Index>(n.index)) - motion.col(i)).squaredNorm();
    total += inner * inv_k;
  }
  return total;
}

inline InputWindow window_from(const std::vector<Points>& frames) {
  InputWindow w;
  for (std::size_t i = 0; i < frames.size(); ++i) w.frames.emplace_back(frames[i], static_cast<double>(i));
  return w;
}

/// Relative error with a floor so near-zero gradients do not blow up.
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace testing_support
