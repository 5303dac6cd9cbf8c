#pragma once

// Abstention: the exact-k-correct distribution and the confidence priority
// derived from it, a learned SELU regressor over tagger features, and the
// drop-fraction sweep. Every priority is a drop-first score.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "notetag/errors.hpp"
#include "notetag/evaluation.hpp"
#include "notetag/model.hpp"
#include "notetag/numerics.hpp"
#include "notetag/objectives.hpp"

namespace notetag {

/// P(exactly k of the m labels are correct) for k = 0..m, treating label i as
/// correct with probability g_i independently. O(m^2).
inline Vector exact_k_distribution(const Vector& g) {
  const Eigen::Index m = g.size();
  Vector p = Vector::Zero(m + 1);
  p(0) = 1.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(g(i) >= 0.0 && g(i) <= 1.0)) throw InvalidInputError("exact_k_distribution: value outside [0,1]");
    for (Eigen::Index k = i + 1; k >= 1; --k) p(k) = p(k) * (1.0 - g(i)) + p(k - 1) * g(i);
    p(0) *= 1.0 - g(i);
  }
  return p;
}

/// Expected fraction of incorrect labels, 1 - sum_k (k/m) P(k).
inline double priority_baseline(const Vector& g) {
  if (g.size() == 0) throw DimensionError("priority_baseline: empty confidence vector");
  const Vector p = exact_k_distribution(g);
  const auto m = static_cast<double>(g.size());
  double expected = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) expected += static_cast<double>(k) / m * p(k);
  return 1.0 - expected;
}

inline std::vector<double> confidence_priorities(const std::vector<PredictionRecord>& preds) {
  std::vector<double> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(priority_baseline(p.confidences));
  return out;
}

struct AbstentionTargets {
  std::vector<double> accuracy;  // fraction of labels decided correctly
  std::vector<double> loss;      // per-document BCE
};

inline AbstentionTargets abstention_targets(const std::vector<PredictionRecord>& preds, const GoldSets& gold) {
  if (preds.size() != gold.size()) throw DimensionError("abstention_targets: prediction and gold counts differ");
  AbstentionTargets t;
  for (std::size_t n = 0; n < preds.size(); ++n) {
    const auto m = static_cast<std::size_t>(preds[n].probabilities.size());
    const auto y = to_indicator(gold[n], m);
    std::size_t correct = 0;
    Vector yv(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      correct += preds[n].decisions[i] == y[i];
      yv(static_cast<Eigen::Index>(i)) = y[i];
    }
    t.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(m));
    t.loss.push_back(bce_loss(preds[n].probabilities, yv).value);
  }
  return t;
}

enum class FeatureKind { kConfidence, kProbability, kLogit, kPooled };
enum class TargetKind { kAccuracy, kLoss };

inline std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::kConfidence:
      return "confidence";
    case FeatureKind::kProbability:
      return "probability";
    case FeatureKind::kLogit:
      return "logit";
    case FeatureKind::kPooled:
      return "pooled";
  }
  return "confidence";
}

inline std::string to_string(TargetKind k) { return k == TargetKind::kAccuracy ? "accuracy" : "loss"; }

inline FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "confidence") return FeatureKind::kConfidence;
  if (s == "probability") return FeatureKind::kProbability;
  if (s == "logit") return FeatureKind::kLogit;
  if (s == "pooled") return FeatureKind::kPooled;
  throw ConfigError("unknown abstention feature kind: " + s);
}

inline TargetKind parse_target_kind(const std::string& s) {
  if (s == "accuracy") return TargetKind::kAccuracy;
  if (s == "loss") return TargetKind::kLoss;
  throw ConfigError("unknown abstention target kind: " + s);
}

/// One row per document.
inline Matrix abstention_features(const std::vector<PredictionRecord>& preds, FeatureKind kind) {
  if (preds.empty()) return Matrix(0, 0);
  auto pick = [kind](const PredictionRecord& p) -> const Vector& {
    switch (kind) {
      case FeatureKind::kConfidence:
        return p.confidences;
      case FeatureKind::kProbability:
        return p.probabilities;
      case FeatureKind::kLogit:
        return p.logits;
      case FeatureKind::kPooled:
        return p.pooled;
    }
    return p.confidences;
  };
  const Eigen::Index dim = pick(preds.front()).size();
  Matrix z(static_cast<Eigen::Index>(preds.size()), dim);
  for (std::size_t n = 0; n < preds.size(); ++n) {
    const Vector& v = pick(preds[n]);
    if (v.size() != dim) throw DimensionError("abstention_features: ragged feature vectors");
    z.row(static_cast<Eigen::Index>(n)) = v.transpose();
  }
  return z;
}

struct AbstainerConfig {
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 64;
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  bool standardize = false;  // z-score inputs with training statistics
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AbstainerConfig, hidden1, hidden2, epochs, batch_size,
                                                learning_rate, seed, standardize)

/// Three affine layers with SELU between them. Inputs are optionally standardized.
struct AbstentionModel {
  FeatureKind feature_kind = FeatureKind::kConfidence;
  TargetKind target_kind = TargetKind::kAccuracy;
  RowVector feature_mean;
  RowVector feature_scale;
  Parameter w1, b1, w2, b2, w3, b3;  // weights are out x in, biases out x 1

  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
  Eigen::Index input_dim() const { return w1.value.cols(); }
};

struct MlpTrace {
  Matrix x, a1, h1, a2, h2;
  Vector out;
};

inline MlpTrace mlp_forward(const AbstentionModel& model, const Matrix& features) {
  if (features.cols() != model.input_dim()) {
    throw DimensionError("abstainer expects " + std::to_string(model.input_dim()) + " features, got " +
                         std::to_string(features.cols()));
  }
  MlpTrace tr;
  tr.x = (features.rowwise() - model.feature_mean).array().rowwise() / model.feature_scale.array();
  tr.a1 = tr.x * model.w1.value.transpose();
  tr.a1.rowwise() += model.b1.value.col(0).transpose();
  tr.h1 = tr.a1.unaryExpr([](double v) { return selu(v); });
  tr.a2 = tr.h1 * model.w2.value.transpose();
  tr.a2.rowwise() += model.b2.value.col(0).transpose();
  tr.h2 = tr.a2.unaryExpr([](double v) { return selu(v); });
  tr.out = (tr.h2 * model.w3.value.transpose()).col(0).array() + model.b3.value(0, 0);
  return tr;
}

/// Mean squared error of the regressor on (features, targets); accumulates
/// gradients when asked.
inline double mlp_mse(AbstentionModel& model, const Matrix& features, const Vector& targets, bool with_grad) {
  const MlpTrace tr = mlp_forward(model, features);
  const Vector diff = tr.out - targets;
  const auto n = static_cast<double>(targets.size());
  if (with_grad) {
    const Vector dout = 2.0 * diff / n;
    model.w3.grad += dout.transpose() * tr.h2;
    model.b3.grad(0, 0) += dout.sum();
    const Matrix dh2 = dout * model.w3.value;
    const Matrix da2 = dh2.cwiseProduct(tr.a2.unaryExpr([](double v) { return selu_derivative(v); }));
    model.w2.grad += da2.transpose() * tr.h1;
    model.b2.grad += da2.colwise().sum().transpose();
    const Matrix dh1 = da2 * model.w2.value;
    const Matrix da1 = dh1.cwiseProduct(tr.a1.unaryExpr([](double v) { return selu_derivative(v); }));
    model.w1.grad += da1.transpose() * tr.x;
    model.b1.grad += da1.colwise().sum().transpose();
  }
  return diff.squaredNorm() / n;
}

/// LeCun-normal weights, zero hidden biases, output bias at the target mean.
inline AbstentionModel init_abstainer(const Matrix& features, const Vector& targets, FeatureKind fk,
                                      TargetKind tk, const AbstainerConfig& config) {
  if (features.rows() != targets.size() || features.rows() == 0) {
    throw DimensionError("abstainer: feature rows and target count differ or are zero");
  }
  if (!all_finite(features) || !all_finite(targets)) throw InvalidInputError("abstainer: non-finite training data");
  AbstentionModel m;
  m.feature_kind = fk;
  m.target_kind = tk;
  m.feature_mean = RowVector::Zero(features.cols());
  m.feature_scale = RowVector::Ones(features.cols());
  if (config.standardize) {
    m.feature_mean = features.colwise().mean();
    const Matrix centered = features.rowwise() - m.feature_mean;
    m.feature_scale = (centered.colwise().squaredNorm() / static_cast<double>(features.rows())).cwiseSqrt();
    for (Eigen::Index j = 0; j < m.feature_scale.size(); ++j) {
      if (m.feature_scale(j) < 1e-12) m.feature_scale(j) = 1.0;
    }
  }
  std::mt19937_64 rng(config.seed);
  auto layer = [&rng](const std::string& name, Eigen::Index out, Eigen::Index in) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    Matrix w(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
    return Parameter(name, std::move(w));
  };
  const auto h1 = static_cast<Eigen::Index>(config.hidden1);
  const auto h2 = static_cast<Eigen::Index>(config.hidden2);
  m.w1 = layer("abstainer.W1", h1, features.cols());
  m.b1 = Parameter("abstainer.b1", Matrix::Zero(h1, 1));
  m.w2 = layer("abstainer.W2", h2, h1);
  m.b2 = Parameter("abstainer.b2", Matrix::Zero(h2, 1));
  m.w3 = layer("abstainer.W3", 1, h2);
  m.b3 = Parameter("abstainer.b3", Matrix::Constant(1, 1, targets.mean()));
  return m;
}

/// Mini-batch Adam on MSE for `config.epochs` passes (or exactly `max_steps`
/// updates when non-zero).
inline AbstentionModel train_abstainer(const Matrix& features, const Vector& targets, FeatureKind fk,
                                       TargetKind tk, const AbstainerConfig& config, std::size_t max_steps = 0) {
  if (config.batch_size == 0 || !(config.learning_rate > 0)) throw ConfigError("abstainer: bad optimizer settings");
  AbstentionModel model = init_abstainer(features, targets, fk, tk, config);
  const auto params = model.parameters();
  // Local Adam: the tagger's optimizer lives in training.hpp, which this
  // header does not depend on.
  std::vector<Matrix> m1, m2;
  for (auto* p : params) {
    m1.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    m2.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  std::mt19937_64 rng(config.seed ^ 0x616273746eULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::size_t t = 0;
  const std::size_t epochs = max_steps > 0 ? std::numeric_limits<std::size_t>::max() : config.epochs;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      if (max_steps > 0 && t == max_steps) return model;
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      Matrix xb(static_cast<Eigen::Index>(end - begin), features.cols());
      Vector yb(static_cast<Eigen::Index>(end - begin));
      for (std::size_t i = begin; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - begin)) = features.row(order[i]);
        yb(static_cast<Eigen::Index>(i - begin)) = targets(order[i]);
      }
      for (auto* p : params) p->zero_grad();
      mlp_mse(model, xb, yb, true);
      ++t;
      const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t));
      for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        m1[k] = 0.9 * m1[k] + 0.1 * p.grad;
        m2[k] = 0.999 * m2[k] + 0.001 * p.grad.cwiseProduct(p.grad);
        p.value.array() -= config.learning_rate * (m1[k].array() / c1) / ((m2[k].array() / c2).sqrt() + 1e-8);
      }
    }
  }
  for (auto* p : params) p->zero_grad();
  return model;
}

inline Vector abstainer_predict(const AbstentionModel& model, const Matrix& features) {
  return mlp_forward(model, features).out;
}

/// Drop-first scores: the predicted loss, or one minus the predicted accuracy.
inline std::vector<double> learned_priority(const AbstentionModel& model, const Matrix& features,
                                            FeatureKind kind) {
  if (kind != model.feature_kind) {
    throw ConfigError("abstainer was trained on " + to_string(model.feature_kind) + " features, got " +
                      to_string(kind));
  }
  const Vector pred = abstainer_predict(model, features);
  std::vector<double> out(static_cast<std::size_t>(pred.size()));
  for (Eigen::Index n = 0; n < pred.size(); ++n) {
    out[static_cast<std::size_t>(n)] = model.target_kind == TargetKind::kAccuracy ? 1.0 - pred(n) : pred(n);
  }
  return out;
}

inline nlohmann::json abstainer_to_json(AbstentionModel& m) {
  auto mat = [](const Matrix& x) {
    return nlohmann::json{{"rows", x.rows()}, {"cols", x.cols()},
                          {"data", std::vector<double>(x.data(), x.data() + x.size())}};
  };
  nlohmann::json params = nlohmann::json::object();
  for (auto* p : m.parameters()) params[p->name] = mat(p->value);
  return {{"feature_kind", to_string(m.feature_kind)},
          {"target_kind", to_string(m.target_kind)},
          {"feature_mean", mat(m.feature_mean)},
          {"feature_scale", mat(m.feature_scale)},
          {"parameters", params}};
}

inline AbstentionModel abstainer_from_json(const nlohmann::json& j) {
  auto mat = [](const nlohmann::json& v) {
    const auto data = v.at("data").get<std::vector<double>>();
    Matrix x(v.at("rows").get<Eigen::Index>(), v.at("cols").get<Eigen::Index>());
    if (static_cast<Eigen::Index>(data.size()) != x.size()) throw SchemaError("abstainer: matrix size mismatch");
    std::copy(data.begin(), data.end(), x.data());
    return x;
  };
  AbstentionModel m;
  m.feature_kind = parse_feature_kind(j.at("feature_kind").get<std::string>());
  m.target_kind = parse_target_kind(j.at("target_kind").get<std::string>());
  m.feature_mean = mat(j.at("feature_mean")).row(0);
  m.feature_scale = mat(j.at("feature_scale")).row(0);
  const auto& ps = j.at("parameters");
  m.w1 = Parameter("abstainer.W1", mat(ps.at("abstainer.W1")));
  m.b1 = Parameter("abstainer.b1", mat(ps.at("abstainer.b1")));
  m.w2 = Parameter("abstainer.W2", mat(ps.at("abstainer.W2")));
  m.b2 = Parameter("abstainer.b2", mat(ps.at("abstainer.b2")));
  m.w3 = Parameter("abstainer.W3", mat(ps.at("abstainer.W3")));
  m.b3 = Parameter("abstainer.b3", mat(ps.at("abstainer.b3")));
  return m;
}

struct SweepCurve {
  std::string scheme;
  std::vector<double> fractions;
  std::vector<double> f1_weighted;
  std::vector<double> exact_match;
  std::vector<std::size_t> retained;

  void write_csv(std::ostream& out) const {
    out << "fraction,f1_weighted,em,scheme\n" << std::setprecision(17);
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      out << fractions[i] << ',' << f1_weighted[i] << ',' << exact_match[i] << ',' << scheme << '\n';
    }
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write sweep: " + path);
    write_csv(out);
  }
};

inline std::vector<double> default_fractions() {
  std::vector<double> f;
  for (int i = 0; i <= 9; ++i) f.push_back(i / 10.0);
  return f;
}

/// Number of documents dropped at fraction f: floor(f * N).
inline std::size_t dropped_count(double fraction, std::size_t n) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("drop fraction must lie in [0, 1]");
  // Slack keeps products such as 0.3 * 10 from flooring to 2.
  return std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)));
}

/// Document indices ordered for dropping: priority descending, index ascending.
inline std::vector<std::size_t> drop_order(const std::vector<double>& priorities) {
  std::vector<std::size_t> idx(priorities.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return priorities[a] > priorities[b]; });
  return idx;
}

inline SweepCurve sweep(const std::vector<double>& priorities, const DecisionMatrix& decisions, const GoldSets& gold,
                        std::size_t label_count, const std::string& scheme,
                        const std::vector<double>& fractions = default_fractions()) {
  if (priorities.size() != decisions.size() || decisions.size() != gold.size()) {
    throw DimensionError("sweep: priorities, decisions and gold must align");
  }
  const auto order = drop_order(priorities);
  SweepCurve curve;
  curve.scheme = scheme;
  for (double f : fractions) {
    const std::size_t drop = dropped_count(f, decisions.size());
    std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(drop), order.end());
    std::sort(keep.begin(), keep.end());
    DecisionMatrix kd;
    GoldSets kg;
    for (std::size_t i : keep) {
      kd.push_back(decisions[i]);
      kg.push_back(gold[i]);
    }
    const AggregateMetrics a = evaluate_decisions(kd, kg, label_count);
    curve.fractions.push_back(f);
    curve.f1_weighted.push_back(a.f1_weighted);
    curve.exact_match.push_back(a.exact_match);
    curve.retained.push_back(keep.size());
  }
  return curve;
}

}  // namespace notetag
