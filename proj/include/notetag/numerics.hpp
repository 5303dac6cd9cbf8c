#pragma once

// Dense arithmetic shared by every module: matrix aliases, trainable
// parameters, activations with their derivatives, the affine building block
// and a central-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "notetag/errors.hpp"

namespace notetag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// SELU constants of the self-normalizing activation.
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

/// A named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

enum class Activation { kSigmoid, kTanh, kSelu };

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double selu(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

inline double selu_derivative(double x) {
  return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

inline double activate(Activation kind, double x) {
  switch (kind) {
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSelu:
      return selu(x);
  }
  return x;
}

/// Element-wise activation. Rejects non-finite input.
inline Matrix apply_activation(Activation kind, const Matrix& x) {
  if (!all_finite(x)) {
    throw InvalidInputError("apply_activation: non-finite input");
  }
  return x.unaryExpr([kind](double v) { return activate(kind, v); });
}

/// Backward transform of apply_activation: given the pre-activation input and
/// the upstream gradient, returns the gradient w.r.t. the input.
inline Matrix activation_backward(Activation kind, const Matrix& x, const Matrix& upstream) {
  if (x.rows() != upstream.rows() || x.cols() != upstream.cols()) {
    throw DimensionError("activation_backward: shape mismatch");
  }
  Matrix local(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    switch (kind) {
      case Activation::kSigmoid: {
        const double s = sigmoid(v);
        local.data()[i] = s * (1.0 - s);
        break;
      }
      case Activation::kTanh: {
        const double t = std::tanh(v);
        local.data()[i] = 1.0 - t * t;
        break;
      }
      case Activation::kSelu:
        local.data()[i] = selu_derivative(v);
        break;
    }
  }
  return local.cwiseProduct(upstream);
}

/// y = W x + b, where x may hold several column vectors; b is a column
/// broadcast across them.
inline Matrix affine(const Matrix& weight, const Matrix& x, const Matrix& bias) {
  if (weight.cols() != x.rows()) {
    throw DimensionError("affine: weight has " + std::to_string(weight.cols()) +
                         " columns but input has " + std::to_string(x.rows()) + " rows");
  }
  if (bias.rows() != weight.rows() || bias.cols() != 1) {
    throw DimensionError("affine: bias must be a column of length " +
                         std::to_string(weight.rows()));
  }
  Matrix y = weight * x;
  y.colwise() += bias.col(0);
  return y;
}

struct AffineGrads {
  Matrix weight;
  Matrix input;
  Matrix bias;
};

inline AffineGrads affine_backward(const Matrix& weight, const Matrix& x, const Matrix& upstream) {
  if (upstream.rows() != weight.rows() || upstream.cols() != x.cols()) {
    throw DimensionError("affine_backward: upstream gradient shape mismatch");
  }
  AffineGrads g;
  g.weight = upstream * x.transpose();
  g.input = weight.transpose() * upstream;
  g.bias = upstream.rowwise().sum();
  return g;
}

struct ParameterCheck {
  std::string name;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  double max_relative_error = 0.0;
  double epsilon = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Differentiable scalar function for grad_check. Called with `true` it must
/// accumulate the analytic gradient into the grad fields of the checked
/// parameters (which grad_check zeroes beforehand); with `false` it only
/// evaluates. Either way it returns the scalar value.
using Objective = std::function<double(bool with_grad)>;

/// Compares analytic gradients against central differences, coordinate by
/// coordinate. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
/// denominator.
inline GradCheckReport grad_check(const Objective& f, const std::vector<Parameter*>& params,
                                  double epsilon, double tolerance) {
  if (!(epsilon > 0.0)) {
    throw ConfigError("grad_check: epsilon must be positive");
  }
  const double first = f(false);
  const double second = f(false);
  if (first != second) {
    throw DeterminismError("grad_check: two evaluations at the same point differ");
  }

  for (Parameter* p : params) p->zero_grad();
  f(true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  report.epsilon = epsilon;
  report.tolerance = tolerance;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    ParameterCheck check{p.name, 0.0};
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& slot = p.value.data()[i];
      const double saved = slot;
      slot = saved + epsilon;
      const double plus = f(false);
      slot = saved - epsilon;
      const double minus = f(false);
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[k].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      check.max_relative_error = std::max(check.max_relative_error, std::abs(a - numeric) / denom);
    }
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.parameters.push_back(std::move(check));
  }
  report.pass = report.max_relative_error < tolerance;
  return report;
}

}  // namespace notetag
