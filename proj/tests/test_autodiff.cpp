#include "support.hpp"

#include <gtest/gtest.h>

using namespace neuralpci;
using namespace neuralpci::autodiff;
using namespace testing_support;

namespace {

LayerParams random_layer(Eigen::Index out, Eigen::Index in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  LayerParams p;
  p.weights = Matrix::NullaryExpr(out, in, [&] { return g(rng); });
  p.biases = Vector::NullaryExpr(out, [&] { return g(rng); });
  return p;
}

// Loss used for gradient checks: sum of c .* y for a fixed random c.
double probe(const Matrix& y, const Matrix& c) { return (y.array() * c.array()).sum(); }

}  // namespace

TEST(Layer, ZeroParametersGiveZeroOutput) {
  LayerParams p{Matrix::Zero(4, 3), Vector::Zero(4)};
  const auto out = linear_leakyrelu_forward(p, Matrix::Random(3, 6), true);
  EXPECT_TRUE(out.output.isZero(0.0));
}

TEST(Layer, LeakyReluOnIdentity) {
  LayerParams p{Matrix::Identity(2, 2), Vector::Zero(2)};
  Matrix x(2, 1);
  x << -1.0, 2.0;
  const auto out = linear_leakyrelu_forward(p, x, true, 0.01);
  EXPECT_DOUBLE_EQ(out.output(0, 0), -0.01);
  EXPECT_DOUBLE_EQ(out.output(1, 0), 2.0);
  const auto affine = linear_leakyrelu_forward(p, x, false);
  EXPECT_DOUBLE_EQ(affine.output(0, 0), -1.0);
}

TEST(Layer, RejectsDimensionMismatch) {
  auto p = random_layer(3, 4, 1);
  EXPECT_THROW(linear_leakyrelu_forward(p, Matrix::Zero(5, 2), true), ShapeError);
  p.biases.resize(2);
  EXPECT_THROW(linear_leakyrelu_forward(p, Matrix::Zero(4, 2), true), ShapeError);
}

TEST(Layer, BackwardMatchesFiniteDifferences) {
  auto p = random_layer(3, 3, 7);
  const Matrix x = Matrix::Random(3, 5);
  const Matrix c = Matrix::Random(3, 5);
  auto fwd = linear_leakyrelu_forward(p, x, true);
  const auto grads = backward(p, fwd.record, c);

  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index col = 0; col < 3; ++col) {
      auto plus = p, minus = p;
      plus.weights(r, col) += h;
      minus.weights(r, col) -= h;
      const double fd = (probe(linear_leakyrelu_forward(plus, x, true).output, c) -
                         probe(linear_leakyrelu_forward(minus, x, true).output, c)) / (2 * h);
      worst = std::max(worst, rel_err(fd, grads.params.weights(r, col)));
    }
    auto plus = p, minus = p;
    plus.biases(r) += h;
    minus.biases(r) -= h;
    const double fd = (probe(linear_leakyrelu_forward(plus, x, true).output, c) -
                       probe(linear_leakyrelu_forward(minus, x, true).output, c)) / (2 * h);
    worst = std::max(worst, rel_err(fd, grads.params.biases(r)));
  }
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index col = 0; col < 5; ++col) {
      Matrix xp = x, xm = x;
      xp(r, col) += h;
      xm(r, col) -= h;
      const double fd = (probe(linear_leakyrelu_forward(p, xp, true).output, c) -
                         probe(linear_leakyrelu_forward(p, xm, true).output, c)) / (2 * h);
      worst = std::max(worst, rel_err(fd, grads.input_grad(r, col)));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Layer, LinearBaseCaseGradient) {
  auto p = random_layer(2, 3, 3);
  p.biases.setZero();
  const Matrix x = Matrix::Random(3, 1);
  const Matrix g = Matrix::Random(2, 1);
  auto fwd = linear_leakyrelu_forward(p, x, false);
  const auto b = backward(p, fwd.record, g);
  EXPECT_TRUE(b.params.weights.isApprox(g * x.transpose(), 1e-15));
}

TEST(Layer, ZeroUpstreamGradientGivesZeroGradients) {
  auto p = random_layer(4, 3, 5);
  auto fwd = linear_leakyrelu_forward(p, Matrix::Random(3, 8), true);
  const auto b = backward(p, fwd.record, Matrix::Zero(4, 8));
  EXPECT_TRUE(b.params.weights.isZero(0.0));
  EXPECT_TRUE(b.params.biases.isZero(0.0));
}

TEST(Layer, RecordIsSingleUseAndGenerationChecked) {
  auto p = random_layer(2, 2, 9);
  auto fwd = linear_leakyrelu_forward(p, Matrix::Random(2, 3), true);
  EXPECT_THROW(backward(p, fwd.record, Matrix::Zero(3, 3)), ShapeError);
  backward(p, fwd.record, Matrix::Ones(2, 3));
  EXPECT_THROW(backward(p, fwd.record, Matrix::Ones(2, 3)), std::logic_error);

  auto again = linear_leakyrelu_forward(p, Matrix::Random(2, 3), true);
  ++p.generation;
  EXPECT_THROW(backward(p, again.record, Matrix::Ones(2, 3)), std::logic_error);
}

TEST(Mlp, BackwardIsDeterministic) {
  const std::vector<LayerShape> dims{{4, 8}, {8, 8}, {8, 3}};
  const auto params = init_params(dims, 11, 1.0);
  const Matrix x = Matrix::Random(4, 16);
  const Matrix g = Matrix::Random(3, 16);
  auto [y1, t1] = mlp_forward(params, x);
  auto [y2, t2] = mlp_forward(params, x);
  const auto [g1, d1] = mlp_backward(params, t1, g);
  const auto [g2, d2] = mlp_backward(params, t2, g);
  for (std::size_t l = 0; l < params.size(); ++l) {
    EXPECT_EQ(g1[l].weights, g2[l].weights);
    EXPECT_EQ(g1[l].biases, g2[l].biases);
  }
  EXPECT_EQ(d1, d2);
}

TEST(Adam, SingleScalarStep) {
  ParamSet p{{Matrix::Zero(1, 1), Vector::Zero(1)}};
  GradSet g{{Matrix::Ones(1, 1), Vector::Zero(1)}};
  auto state = AdamState::for_params(p, 0.001);
  adam_step(p, g, state);
  EXPECT_NEAR(p[0].weights(0, 0), -0.001, 1e-6);
  EXPECT_EQ(state.step_count, 1u);
  EXPECT_EQ(p[0].biases(0), 0.0);
}

TEST(Adam, SecondIdenticalStepIsNoLarger) {
  ParamSet p{{Matrix::Zero(1, 1), Vector::Zero(1)}};
  GradSet g{{Matrix::Constant(1, 1, 0.3), Vector::Zero(1)}};
  auto state = AdamState::for_params(p);
  adam_step(p, g, state);
  const double u1 = std::abs(p[0].weights(0, 0));
  const double before = p[0].weights(0, 0);
  adam_step(p, g, state);
  const double u2 = std::abs(p[0].weights(0, 0) - before);
  EXPECT_LE(u2, u1 + 1e-9);
}

TEST(Adam, ZeroGradientIsAFixedPoint) {
  const std::vector<LayerShape> dims{{3, 5}, {5, 2}};
  auto p = init_params(dims, 2, 1.0);
  const auto before = p;
  auto state = AdamState::for_params(p);
  for (int i = 0; i < 3; ++i) adam_step(p, zero_grads(p), state);
  for (std::size_t l = 0; l < p.size(); ++l) {
    EXPECT_EQ(p[l].weights, before[l].weights);
    EXPECT_EQ(p[l].biases, before[l].biases);
  }
  EXPECT_EQ(state.step_count, 3u);
  for (const auto& v : state.second_moment) EXPECT_GE(v.weights.minCoeff(), 0.0);
}

TEST(Adam, RejectsNonFiniteGradients) {
  ParamSet p{{Matrix::Zero(1, 1), Vector::Zero(1)}};
  GradSet g{{Matrix::Constant(1, 1, std::nan("")), Vector::Zero(1)}};
  auto state = AdamState::for_params(p);
  EXPECT_THROW(adam_step(p, g, state), NumericError);
}

TEST(Init, SameSeedIsBitIdentical) {
  const std::vector<LayerShape> dims{{12, 32}, {32, 3}};
  const auto a = init_params(dims, 42, 1e-2);
  const auto b = init_params(dims, 42, 1e-2);
  const auto c = init_params(dims, 43, 1e-2);
  EXPECT_EQ(a[0].weights, b[0].weights);
  EXPECT_EQ(a[1].biases, b[1].biases);
  EXPECT_NE(a[0].weights, c[0].weights);
}

TEST(Init, FanInScaledStandardDeviation) {
  const std::vector<LayerShape> dims{{512, 256}};
  const auto p = init_params(dims, 5, 1.0);
  const auto& w = p[0].weights;
  ASSERT_GE(w.size(), 100000);
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().mean());
  EXPECT_NEAR(sd, std::sqrt(2.0 / 512.0), 0.2 * std::sqrt(2.0 / 512.0));
}

TEST(Init, ZeroFinalScaleSilencesTheField) {
  FieldConfig cfg;
  cfg.depth = 3;
  cfg.width = 16;
  cfg.final_layer_scale = 0.0;
  const auto field = make_field(cfg, 1);
  const PointCloud cloud(random_points(20, 3));
  const auto out = field_forward(field, cloud, 0.0, 2.5);
  EXPECT_EQ(out.points, cloud.points);
}
