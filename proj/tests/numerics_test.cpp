#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "notetag/numerics.hpp"

namespace notetag {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

TEST(Activation, SigmoidAtZero) { EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5); }

TEST(Activation, TanhAtZero) {
  const Matrix x = Matrix::Zero(1, 1);
  EXPECT_DOUBLE_EQ(apply_activation(Activation::kTanh, x)(0, 0), 0.0);
}

TEST(Activation, SeluValues) {
  EXPECT_DOUBLE_EQ(selu(0.0), 0.0);
  EXPECT_NEAR(selu(1.0), 1.0507009873554805, 1e-15);
  EXPECT_NEAR(selu(-1.0), 1.0507009873554805 * 1.6732632423543772 * (std::exp(-1.0) - 1.0), 1e-15);
}

TEST(Activation, SigmoidStableForLargeInputs) {
  EXPECT_GT(sigmoid(-800.0), -1e-300);
  EXPECT_LT(sigmoid(-800.0), 1e-300);
  EXPECT_EQ(sigmoid(800.0), 1.0);
  EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
}

TEST(Activation, RejectsNonFiniteInput) {
  Matrix x = Matrix::Zero(2, 2);
  x(1, 0) = std::nan("");
  EXPECT_THROW(apply_activation(Activation::kSigmoid, x), InvalidInputError);
  x(1, 0) = INFINITY;
  EXPECT_THROW(apply_activation(Activation::kSelu, x), InvalidInputError);
}

TEST(Activation, SigmoidSymmetryProperty) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(4, 5, rng, 5.0);
    const Matrix s = apply_activation(Activation::kSigmoid, x) + apply_activation(Activation::kSigmoid, -x);
    EXPECT_LT((s.array() - 1.0).abs().maxCoeff(), 1e-12);
  }
}

TEST(Activation, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (auto kind : {Activation::kSigmoid, Activation::kTanh, Activation::kSelu}) {
    for (int seed = 0; seed < 20; ++seed) {
      Parameter x("x", random_matrix(3, 4, rng, 2.0));
      const Matrix upstream = random_matrix(3, 4, rng);
      Objective f = [&](bool with_grad) {
        const Matrix y = apply_activation(kind, x.value);
        if (with_grad) x.grad += activation_backward(kind, x.value, upstream);
        return y.cwiseProduct(upstream).sum();
      };
      const auto report = grad_check(f, {&x}, 1e-4, 1e-4);
      EXPECT_TRUE(report.pass) << "kind " << static_cast<int>(kind) << " err " << report.max_relative_error;
    }
  }
}

TEST(Affine, Identity) {
  const Matrix w = Matrix::Identity(2, 2);
  Matrix x(2, 1);
  x << 3, 4;
  const Matrix y = affine(w, x, Matrix::Zero(2, 1));
  EXPECT_DOUBLE_EQ(y(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 4.0);
}

TEST(Affine, ZeroMapReturnsBias) {
  Matrix x(2, 1);
  x << -7, 2.5;
  const Matrix y = affine(Matrix::Zero(2, 2), x, Matrix::Ones(2, 1));
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 1.0);
}

TEST(Affine, WorkedExample) {
  Matrix w(2, 2);
  w << 1, 2, 3, 4;
  const Matrix y = affine(w, Matrix::Ones(2, 1), Matrix::Zero(2, 1));
  // Row sums of W.
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0 + 2.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 3.0 + 4.0);
}

TEST(Affine, ShapeMismatchThrows) {
  EXPECT_THROW(affine(Matrix::Zero(2, 3), Matrix::Zero(2, 1), Matrix::Zero(2, 1)), DimensionError);
  EXPECT_THROW(affine(Matrix::Zero(2, 2), Matrix::Zero(2, 1), Matrix::Zero(3, 1)), DimensionError);
}

TEST(Affine, LinearityProperty) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix w = random_matrix(3, 4, rng);
    const Matrix x = random_matrix(4, 2, rng);
    const Matrix y = random_matrix(4, 2, rng);
    const double a = 1.7, b = -0.3;
    const Matrix zero = Matrix::Zero(3, 1);
    const Matrix lhs = affine(w, a * x + b * y, zero);
    const Matrix rhs = a * affine(w, x, zero) + b * affine(w, y, zero);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Affine, BackwardPassesGradCheck) {
  std::mt19937_64 rng(9);
  for (int seed = 0; seed < 20; ++seed) {
    Parameter w("W", random_matrix(3, 4, rng));
    Parameter x("x", random_matrix(4, 2, rng));
    Parameter b("b", random_matrix(3, 1, rng));
    const Matrix upstream = random_matrix(3, 2, rng);
    Objective f = [&](bool with_grad) {
      const Matrix y = affine(w.value, x.value, b.value);
      if (with_grad) {
        const AffineGrads g = affine_backward(w.value, x.value, upstream);
        w.grad += g.weight;
        x.grad += g.input;
        b.grad += g.bias;
      }
      return y.cwiseProduct(upstream).sum();
    };
    EXPECT_TRUE(grad_check(f, {&w, &x, &b}, 1e-4, 1e-4).pass);
  }
}

TEST(GradCheck, QuadraticPasses) {
  Parameter p("p", Matrix::Zero(1, 5));
  p.value << 0.5, -1.0, 2.0, 3.5, -0.25;
  Objective f = [&](bool with_grad) {
    if (with_grad) p.grad += 2.0 * p.value;
    return p.value.squaredNorm();
  };
  const auto report = grad_check(f, {&p}, 1e-4, 1e-6);
  EXPECT_TRUE(report.pass);
  EXPECT_DOUBLE_EQ(report.epsilon, 1e-4);
  ASSERT_EQ(report.parameters.size(), 1u);
  EXPECT_EQ(report.parameters[0].name, "p");
}

TEST(GradCheck, WrongGradientFails) {
  Parameter p("p", Matrix::Constant(1, 3, 1.5));
  Objective f = [&](bool with_grad) {
    if (with_grad) p.grad += 4.0 * p.value;
    return p.value.squaredNorm();
  };
  const auto report = grad_check(f, {&p}, 1e-4, 1e-6);
  EXPECT_FALSE(report.pass);
  EXPECT_NEAR(report.max_relative_error, 0.5, 1e-6);
}

TEST(GradCheck, NonDeterministicFunctionThrows) {
  Parameter p("p", Matrix::Ones(1, 1));
  int calls = 0;
  Objective f = [&](bool) { return p.value(0, 0) + (++calls); };
  EXPECT_THROW(grad_check(f, {&p}, 1e-4, 1e-4), DeterminismError);
}

TEST(GradCheck, RejectsNonPositiveEpsilon) {
  Parameter p("p", Matrix::Ones(1, 1));
  Objective f = [&](bool) { return 0.0; };
  EXPECT_THROW(grad_check(f, {&p}, 0.0, 1e-4), ConfigError);
}

TEST(GradCheck, PassFlagMatchesTolerance) {
  Parameter p("p", Matrix::Constant(1, 2, 1.0));
  Objective f = [&](bool with_grad) {
    if (with_grad) p.grad += 2.0 * p.value * 1.001;
    return p.value.squaredNorm();
  };
  const auto report = grad_check(f, {&p}, 1e-4, 1e-2);
  EXPECT_EQ(report.pass, report.max_relative_error < report.tolerance);
  EXPECT_TRUE(report.pass);
}

TEST(Parameter, GradShapeFollowsValue) {
  Parameter p("w", Matrix::Ones(3, 2));
  EXPECT_EQ(p.grad.rows(), 3);
  EXPECT_EQ(p.grad.cols(), 2);
  p.grad.setOnes();
  p.zero_grad();
  EXPECT_EQ(p.grad.cwiseAbs().sum(), 0.0);
}

}  // namespace
}  // namespace notetag
