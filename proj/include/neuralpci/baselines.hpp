#pragma once

// Explicit motion models over point-aligned frames, scene-flow warping and the
// pair-frame fusion baselines.

#include "neuralpci/field.hpp"
#include "neuralpci/optimize.hpp"
#include "neuralpci/spatial.hpp"
#include "neuralpci/types.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace neuralpci {

/// Four point-aligned clouds at relative times (-1, 0, 1, 2); `p1` is the
/// untransformed reference and the others follow its point order.
struct CorrespondenceSet {
  Points p0, p1, p2, p3;

  void validate() const {
    const auto n = p1.cols();
    if (p0.cols() != n || p2.cols() != n || p3.cols() != n)
      throw ShapeError("correspondence clouds must share one point count");
  }
};

struct MotionDerivatives {
  Points v0, v1, v2;
  Points a0, a1;
  Points b;
};

inline MotionDerivatives motion_derivatives(const CorrespondenceSet& c) {
  c.validate();
  MotionDerivatives d;
  d.v0 = c.p1 - c.p0;
  d.v1 = c.p2 - c.p1;
  d.v2 = c.p3 - c.p2;
  d.a0 = d.v1 - d.v0;
  d.a1 = d.v2 - d.v1;
  d.b = d.a1 - d.a0;
  return d;
}

enum class MotionOrder { linear, quadratic, cubic };

/// Cloud at time t in (0, 1) between p1 and p2. The coefficients are the
/// published ones; the cubic form is not an exact fit through the four
/// samples (x(t) = t^2 comes back as t + t^2).
inline PointCloud explicit_interpolate(const CorrespondenceSet& c, double t, MotionOrder order) {
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("explicit interpolation needs t in (0, 1)");
  const auto d = motion_derivatives(c);
  Points out;
  switch (order) {
    case MotionOrder::linear:
      out = c.p1 + ((d.v0 + d.v1) / 2.0) * t;
      break;
    case MotionOrder::quadratic:
      out = c.p1 + ((d.v0 + d.v1) / 2.0) * t + (d.a0 / 2.0) * (t * t);
      break;
    case MotionOrder::cubic:
      out = c.p1 + ((d.v0 + d.v1 + d.v2) / 3.0) * t + ((d.a0 + d.a1) / 4.0) * (t * t) +
            (d.b / 6.0) * (t * t * t);
      break;
  }
  return PointCloud(std::move(out), t);
}

/// Aligned clouds predicted by a field fitted on a 4-frame window: frame 1 is
/// pushed to the times of frames 0, 2 and 3.
inline CorrespondenceSet correspondences_from_field(const NeuralField& field, const InputWindow& window) {
  validate_window(window);
  if (window.size() != 4) throw std::invalid_argument("explicit models need a 4-frame window");
  const double queries[] = {0.0, 2.0, 3.0};
  const auto norm = Normalization::of(window);
  const Points ref = norm.to_field(window.frames[1].points);
  auto ev = evaluate_field(field, ref, 1.0, queries);
  CorrespondenceSet c;
  c.p1 = window.frames[1].points;
  c.p0 = norm.to_world(ref + ev.motions[0]);
  c.p2 = norm.to_world(ref + ev.motions[1]);
  c.p3 = norm.to_world(ref + ev.motions[2]);
  return c;
}

/// Correspondences taken from point order, for frames that already share it.
inline CorrespondenceSet correspondences_from_order(const InputWindow& window) {
  if (window.size() != 4) throw std::invalid_argument("explicit models need a 4-frame window");
  CorrespondenceSet c{window.frames[0].points, window.frames[1].points, window.frames[2].points,
                      window.frames[3].points};
  c.validate();
  return c;
}

struct WarpResult {
  PointCloud forward;
  PointCloud backward;
};

/// forward = P0 + t * f(0->1), backward = P1 + (1 - t) * f(1->0).
inline WarpResult scene_flow_warp(const Points& p0, const Points& p1, const Points& flow_fwd,
                                  const Points& flow_bwd, double t) {
  if (flow_fwd.cols() != p0.cols()) throw ShapeError("forward flow must match the first cloud");
  if (flow_bwd.cols() != p1.cols()) throw ShapeError("backward flow must match the second cloud");
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("scene flow warp needs t in (0, 1)");
  return {PointCloud(p0 + t * flow_fwd, t), PointCloud(p1 + (1.0 - t) * flow_bwd, t)};
}

/// Draws each output point from a uniformly chosen source cloud (and a uniform
/// point within it). A single source with n_out equal to its size yields a
/// permutation of that cloud.
inline PointCloud fuse_random(const std::vector<PointCloud>& clouds, std::size_t n_out, std::uint64_t seed) {
  if (clouds.empty()) throw std::invalid_argument("fuse_random needs at least one cloud");
  if (n_out < 1) throw std::invalid_argument("fuse_random needs n_out >= 1");
  for (const auto& c : clouds)
    if (c.empty()) throw std::invalid_argument("fuse_random inputs must be nonempty");
  std::mt19937_64 rng(seed);
  if (clouds.size() == 1 && n_out == clouds[0].size()) {
    std::vector<Eigen::Index> perm(n_out);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Points out(3, static_cast<Eigen::Index>(n_out));
    for (std::size_t i = 0; i < n_out; ++i) out.col(static_cast<Eigen::Index>(i)) = clouds[0].points.col(perm[i]);
    return PointCloud(std::move(out), clouds[0].time);
  }
  std::uniform_int_distribution<std::size_t> pick_cloud(0, clouds.size() - 1);
  Points out(3, static_cast<Eigen::Index>(n_out));
  for (std::size_t i = 0; i < n_out; ++i) {
    const auto& src = clouds[pick_cloud(rng)];
    std::uniform_int_distribution<Eigen::Index> pick_point(0, src.points.cols() - 1);
    out.col(static_cast<Eigen::Index>(i)) = src.points.col(pick_point(rng));
  }
  return PointCloud(std::move(out), clouds[0].time);
}

/// Every point of the first cloud averaged with its nearest neighbor in each
/// of the other clouds.
inline PointCloud fuse_nn(const std::vector<PointCloud>& clouds) {
  if (clouds.size() < 2) throw std::invalid_argument("fuse_nn needs at least two clouds");
  for (const auto& c : clouds)
    if (c.empty()) throw std::invalid_argument("fuse_nn inputs must be nonempty");
  std::vector<NeighborIndex> others;
  for (std::size_t c = 1; c < clouds.size(); ++c) others.emplace_back(clouds[c].points);
  const auto& first = clouds[0].points;
  Points out(3, first.cols());
  const double inv = 1.0 / static_cast<double>(clouds.size());
  for (Eigen::Index i = 0; i < first.cols(); ++i) {
    const Vec3 p = first.col(i);
    Vec3 acc = p;
    for (const auto& idx : others) acc += idx.points().col(static_cast<Eigen::Index>(idx.nearest(p).index));
    out.col(i) = acc * inv;
  }
  return PointCloud(std::move(out), clouds[0].time);
}

}  // namespace neuralpci
