#include "support.hpp"

#include <gtest/gtest.h>

using namespace neuralpci;
using namespace testing_support;

namespace {

// Each point follows x(t) = a + b t + c t^2 (+ d t^3), sampled at t = -1, 0, 1, 2.
CorrespondenceSet polynomial_set(const Points& a, const Points& b, const Points& c, const Points& d) {
  auto at = [&](double t) -> Points { return a + b * t + c * (t * t) + d * (t * t * t); };
  return {at(-1), at(0), at(1), at(2)};
}

Points one_point(double x) {
  Points p = Points::Zero(3, 1);
  p(0, 0) = x;
  return p;
}

}  // namespace

TEST(Explicit, DerivativesOfSquareTrajectory) {
  const CorrespondenceSet c{one_point(1), one_point(0), one_point(1), one_point(4)};
  const auto d = motion_derivatives(c);
  EXPECT_EQ(d.v0(0, 0), -1.0);
  EXPECT_EQ(d.v1(0, 0), 1.0);
  EXPECT_EQ(d.v2(0, 0), 3.0);
  EXPECT_EQ(d.a0(0, 0), 2.0);
  EXPECT_EQ(d.a1(0, 0), 2.0);
  EXPECT_EQ(d.b(0, 0), 0.0);
}

TEST(Explicit, QuadraticOnSquareTrajectory) {
  const CorrespondenceSet c{one_point(1), one_point(0), one_point(1), one_point(4)};
  EXPECT_DOUBLE_EQ(explicit_interpolate(c, 0.5, MotionOrder::quadratic).points(0, 0), 0.25);
}

TEST(Explicit, CubicFormulaReturnsTPlusTSquared) {
  const CorrespondenceSet c{one_point(1), one_point(0), one_point(1), one_point(4)};
  for (double t : {0.1, 0.5, 0.9}) EXPECT_DOUBLE_EQ(explicit_interpolate(c, t, MotionOrder::cubic).points(0, 0), t + t * t);
}

TEST(Explicit, QuadraticReproducesQuadratics) {
  const Points a = random_points(50, 1), b = random_points(50, 2), c = random_points(50, 3);
  const auto set = polynomial_set(a, b, c, Points::Zero(3, 50));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int i = 0; i < 20; ++i) {
    const double t = u(rng);
    const Points truth = a + b * t + c * (t * t);
    EXPECT_LE((explicit_interpolate(set, t, MotionOrder::quadratic).points - truth).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Explicit, EveryOrderReproducesLinearMotion) {
  const Points a = random_points(40, 5), b = random_points(40, 6);
  const auto set = polynomial_set(a, b, Points::Zero(3, 40), Points::Zero(3, 40));
  for (auto order : {MotionOrder::linear, MotionOrder::quadratic, MotionOrder::cubic}) {
    for (double t : {0.2, 0.5, 0.7}) {
      const Points truth = a + b * t;
      EXPECT_LE((explicit_interpolate(set, t, order).points - truth).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Explicit, RejectsEndpointsAndShapeMismatch) {
  const CorrespondenceSet c{one_point(1), one_point(0), one_point(1), one_point(4)};
  EXPECT_THROW(explicit_interpolate(c, 0.0, MotionOrder::linear), std::invalid_argument);
  EXPECT_THROW(explicit_interpolate(c, 1.0, MotionOrder::linear), std::invalid_argument);
  CorrespondenceSet bad = c;
  bad.p3 = Points::Zero(3, 2);
  EXPECT_THROW(explicit_interpolate(bad, 0.5, MotionOrder::linear), ShapeError);
}

TEST(Explicit, CorrespondencesFromOrderNeedFourFrames) {
  EXPECT_THROW(correspondences_from_order(window_from({random_points(5, 1), random_points(5, 2)})),
               std::invalid_argument);
}

TEST(Explicit, FieldCorrespondencesKeepTheReference) {
  FieldConfig cfg;
  cfg.depth = 2;
  cfg.width = 8;
  const auto f = make_field(cfg, 1);
  const auto w = window_from({random_points(10, 1), random_points(10, 2), random_points(10, 3), random_points(10, 4)});
  const auto c = correspondences_from_field(f, w);
  EXPECT_EQ(c.p1, w.frames[1].points);
  EXPECT_EQ(c.p0.cols(), 10);
}

TEST(SceneFlow, ExactFlowsWarpOntoTheLine) {
  const Points p0 = random_points(30, 1);
  const Points p1 = p0.colwise() + Vec3(1, 2, 3);
  const Points fwd = p1 - p0;
  const auto r = scene_flow_warp(p0, p1, fwd, Points(-fwd), 0.25);
  const Points truth = p0.colwise() + Vec3(0.25, 0.5, 0.75);
  EXPECT_LE((r.forward.points - truth).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((r.backward.points - truth).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(scene_flow_warp(p0, p1, Points::Zero(3, 2), fwd, 0.5), ShapeError);
  EXPECT_THROW(scene_flow_warp(p0, p1, fwd, fwd, 1.5), std::invalid_argument);
}

TEST(Fusion, RandomSingleSourceIsAPermutation) {
  const Points p = random_points(64, 1);
  const auto out = fuse_random({PointCloud(p)}, 64, 3);
  EXPECT_DOUBLE_EQ(chamfer(out.points, p).value, 0.0);
  EXPECT_NEAR(out.points.rowwise().sum().norm(), p.rowwise().sum().norm(), 1e-12);
}

TEST(Fusion, RandomDrawsFromBothSourcesEvenly) {
  const Points a = Points::Zero(3, 10), b = Points::Ones(3, 10);
  const auto out = fuse_random({PointCloud(a), PointCloud(b)}, 4000, 7);
  const double frac_b = out.points.row(0).sum() / 4000.0;
  EXPECT_NEAR(frac_b, 0.5, 0.03);
  EXPECT_EQ(out.points, fuse_random({PointCloud(a), PointCloud(b)}, 4000, 7).points);
}

TEST(Fusion, NearestNeighborAverageMatchesBruteForce) {
  const Points a = random_points(40, 1), b = random_points(35, 2), c = random_points(50, 3);
  const auto out = fuse_nn({PointCloud(a), PointCloud(b), PointCloud(c)});
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    const Vec3 p = a.col(i);
    const Vec3 nb = b.col(static_cast<Eigen::Index>(brute_knn(b, p, 1)[0].index));
    const Vec3 nc = c.col(static_cast<Eigen::Index>(brute_knn(c, p, 1)[0].index));
    EXPECT_LE((out.point(static_cast<std::size_t>(i)) - (p + nb + nc) / 3.0).norm(), 1e-14);
  }
  EXPECT_THROW(fuse_nn({PointCloud(a)}), std::invalid_argument);
}
