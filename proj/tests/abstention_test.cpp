#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "notetag/abstention.hpp"
#include "notetag/evaluation.hpp"

namespace notetag {
namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Sum over all 2^m correctness patterns.
Vector brute_force_exact_k(const Vector& g) {
  const auto m = static_cast<int>(g.size());
  Vector p = Vector::Zero(m + 1);
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    double prob = 1.0;
    int k = 0;
    for (int i = 0; i < m; ++i) {
      const bool correct = (mask >> i) & 1u;
      prob *= correct ? g(i) : 1.0 - g(i);
      k += correct;
    }
    p(k) += prob;
  }
  return p;
}

PredictionRecord record(const Vector& probs) {
  PredictionRecord r;
  r.probabilities = probs;
  r.logits = probs.unaryExpr([](double p) { return std::log(p / (1.0 - p)); });
  r.decisions = decide(probs);
  r.confidences = confidence(probs);
  r.pooled = Vector::Zero(2);
  return r;
}

TEST(ExactK, TwoLabelExample) {
  const Vector p = exact_k_distribution(vec({0.8, 0.6}));
  EXPECT_NEAR(p(0), 0.08, 1e-15);
  EXPECT_NEAR(p(1), 0.44, 1e-15);
  EXPECT_NEAR(p(2), 0.48, 1e-15);
}

TEST(ExactK, CertaintyPutsAllMassOnM) {
  const Vector p = exact_k_distribution(Vector::Ones(6));
  EXPECT_EQ(p(6), 1.0);
  EXPECT_EQ(p.head(6).cwiseAbs().sum(), 0.0);
}

TEST(ExactK, EqualsBruteForceForAllSmallM) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int m = 0; m <= 12; ++m) {
    for (int trial = 0; trial < 100; ++trial) {
      Vector g(m);
      for (int i = 0; i < m; ++i) g(i) = u(rng);
      const Vector dp = exact_k_distribution(g);
      const Vector bf = brute_force_exact_k(g);
      EXPECT_LT((dp - bf).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_NEAR(dp.sum(), 1.0, 1e-10);
      double mean = 0;
      for (int k = 0; k <= m; ++k) mean += k * dp(k);
      EXPECT_NEAR(mean, g.sum(), 1e-10);
    }
  }
}

TEST(ExactK, RejectsOutOfRange) { EXPECT_THROW(exact_k_distribution(vec({0.5, 1.2})), InvalidInputError); }

TEST(PriorityBaseline, Examples) {
  EXPECT_NEAR(priority_baseline(Vector::Ones(4)), 0.0, 1e-15);
  EXPECT_NEAR(priority_baseline(vec({0.8, 0.6})), 0.3, 1e-15);
  EXPECT_NEAR(priority_baseline(Vector::Constant(5, 0.5)), 0.5, 1e-15);
}

TEST(PriorityBaseline, EqualsMeanMiss) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector g(9);
    for (int i = 0; i < 9; ++i) g(i) = u(rng);
    EXPECT_NEAR(priority_baseline(g), (1.0 - g.array()).mean(), 1e-12);
  }
}

TEST(AbstentionTargets, Examples) {
  const auto t = abstention_targets({record(vec({0.9, 0.2}))}, {{0}});
  EXPECT_EQ(t.accuracy[0], 1.0);
  EXPECT_NEAR(t.loss[0], (-std::log(0.9) - std::log(0.8)) / 2.0, 1e-12);
  EXPECT_NEAR(t.loss[0], 0.164252, 1e-6);

  const auto half = abstention_targets({record(vec({0.9, 0.9, 0.9, 0.1, 0.1, 0.1}))}, {{0, 3}});
  // Wrong on labels 1, 2 and 3.
  EXPECT_EQ(half.accuracy[0], 0.5);
  EXPECT_THROW(abstention_targets({record(vec({0.5}))}, {}), DimensionError);
}

TEST(Features, KindsAndParsing) {
  const std::vector<PredictionRecord> preds = {record(vec({0.9, 0.2, 0.6})), record(vec({0.1, 0.5, 0.7}))};
  EXPECT_EQ(abstention_features(preds, FeatureKind::kConfidence)(1, 0), 0.9);
  EXPECT_EQ(abstention_features(preds, FeatureKind::kProbability)(0, 1), 0.2);
  EXPECT_EQ(abstention_features(preds, FeatureKind::kPooled).cols(), 2);
  EXPECT_EQ(abstention_features(preds, FeatureKind::kLogit).rows(), 2);
  for (auto k : {FeatureKind::kConfidence, FeatureKind::kProbability, FeatureKind::kLogit, FeatureKind::kPooled}) {
    EXPECT_EQ(parse_feature_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_target_kind("loss"), TargetKind::kLoss);
  EXPECT_THROW(parse_feature_kind("hidden"), ConfigError);
  EXPECT_THROW(parse_target_kind("f1"), ConfigError);
}

Matrix uniform_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix x(r, c);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

TEST(Abstainer, ConstantTargetIsLearned) {
  std::mt19937_64 rng(3);
  const Matrix x = uniform_matrix(300, 6, rng);
  const Vector y = Vector::Constant(300, 0.8);
  AbstainerConfig c;
  c.batch_size = 300;
  c.epochs = 6000;
  AbstentionModel m = train_abstainer(x, y, FeatureKind::kConfidence, TargetKind::kAccuracy, c);
  EXPECT_LT((abstainer_predict(m, x).array() - 0.8).abs().maxCoeff(), 1e-2);
}

TEST(Abstainer, FitsLinearTarget) {
  std::mt19937_64 rng(4);
  const Matrix x = uniform_matrix(500, 5, rng);
  const Vector w = vec({0.3, -0.2, 0.1, 0.0, 0.25});
  const Vector y = (x * w).array() + 0.2;
  AbstainerConfig c;
  c.learning_rate = 1e-2;
  c.epochs = 100;
  AbstentionModel m = train_abstainer(x, y, FeatureKind::kProbability, TargetKind::kLoss, c, 200);
  EXPECT_LT(mlp_mse(m, x, y, false), 1e-3);
}

TEST(Abstainer, ZeroStepsKeepsInitialization) {
  std::mt19937_64 rng(5);
  const Matrix x = uniform_matrix(50, 4, rng);
  const Vector y = uniform_matrix(50, 1, rng).col(0);
  AbstainerConfig c;
  c.epochs = 0;
  const AbstentionModel trained = train_abstainer(x, y, FeatureKind::kConfidence, TargetKind::kAccuracy, c);
  const AbstentionModel init = init_abstainer(x, y, FeatureKind::kConfidence, TargetKind::kAccuracy, c);
  EXPECT_EQ(abstainer_predict(trained, x), abstainer_predict(init, x));
}

TEST(Abstainer, DeterministicGivenSeed) {
  std::mt19937_64 rng(6);
  const Matrix x = uniform_matrix(100, 4, rng);
  const Vector y = uniform_matrix(100, 1, rng).col(0);
  const auto a = train_abstainer(x, y, FeatureKind::kConfidence, TargetKind::kAccuracy, {});
  const auto b = train_abstainer(x, y, FeatureKind::kConfidence, TargetKind::kAccuracy, {});
  EXPECT_EQ(abstainer_predict(a, x), abstainer_predict(b, x));
}

TEST(Abstainer, BackwardPassesGradCheck) {
  std::mt19937_64 rng(7);
  const Matrix x = uniform_matrix(20, 3, rng);
  const Vector y = uniform_matrix(20, 1, rng).col(0);
  AbstainerConfig c;
  c.hidden1 = 5;
  c.hidden2 = 4;
  AbstentionModel m = init_abstainer(x, y, FeatureKind::kConfidence, TargetKind::kAccuracy, c);
  Objective f = [&](bool with_grad) { return mlp_mse(m, x, y, with_grad); };
  EXPECT_TRUE(grad_check(f, m.parameters(), 1e-4, 1e-4).pass);
}

TEST(Abstainer, ErrorsAndSerialization) {
  std::mt19937_64 rng(8);
  const Matrix x = uniform_matrix(40, 3, rng);
  const Vector y = uniform_matrix(40, 1, rng).col(0);
  AbstentionModel m = train_abstainer(x, y, FeatureKind::kLogit, TargetKind::kLoss, {});
  EXPECT_THROW(train_abstainer(x, y.head(10), FeatureKind::kLogit, TargetKind::kLoss, {}), DimensionError);
  EXPECT_THROW(abstainer_predict(m, Matrix::Zero(2, 4)), DimensionError);
  EXPECT_THROW(learned_priority(m, x, FeatureKind::kConfidence), ConfigError);
  const AbstentionModel back = abstainer_from_json(nlohmann::json::parse(abstainer_to_json(m).dump()));
  EXPECT_EQ(back.target_kind, TargetKind::kLoss);
  EXPECT_LT((abstainer_predict(back, x) - abstainer_predict(m, x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LearnedPriority, OrientationAndInversion) {
  std::mt19937_64 rng(9);
  const Matrix x = uniform_matrix(30, 2, rng);
  const Vector y = Vector::Constant(30, 1.0);
  AbstainerConfig c;
  c.epochs = 0;
  // Untrained model outputs the target mean 1.0 up to the random layers; pin
  // the last layer to zero so the output is exactly b3.
  AbstentionModel acc = init_abstainer(x, y, FeatureKind::kConfidence, TargetKind::kAccuracy, c);
  acc.w3.value.setZero();
  for (double p : learned_priority(acc, x, FeatureKind::kConfidence)) EXPECT_DOUBLE_EQ(p, 0.0);

  AbstentionModel loss = init_abstainer(x, y, FeatureKind::kConfidence, TargetKind::kLoss, c);
  loss.w3.value.setZero();
  loss.b3.value(0, 0) = 0.9;
  for (double p : learned_priority(loss, x, FeatureKind::kConfidence)) EXPECT_DOUBLE_EQ(p, 0.9);
}

TEST(DropOrder, HighestFirstTiesByIndex) {
  EXPECT_EQ(drop_order({0.1, 0.9, 0.5, 0.9}), (std::vector<std::size_t>{1, 3, 2, 0}));
  // Loss 0.9 ranks before loss 0.1.
  EXPECT_EQ(drop_order({0.1, 0.9}).front(), 1u);
}

TEST(DropOrder, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(50), q(50);
  for (std::size_t i = 0; i < 50; ++i) {
    p[i] = u(rng);
    q[i] = std::exp(3.0 * p[i]) + 7.0;
  }
  EXPECT_EQ(drop_order(p), drop_order(q));
}

TEST(DroppedCount, FloorWithSlack) {
  EXPECT_EQ(dropped_count(0.0, 10), 0u);
  EXPECT_EQ(dropped_count(0.3, 10), 3u);
  EXPECT_EQ(dropped_count(0.9, 7), 6u);
  EXPECT_EQ(dropped_count(1.0, 7), 7u);
  EXPECT_THROW(dropped_count(-0.1, 7), ConfigError);
  EXPECT_THROW(dropped_count(1.1, 7), ConfigError);
}

struct SweepData {
  DecisionMatrix decisions;
  GoldSets gold;
  std::vector<double> oracle;  // fraction of wrong labels
};

// Each document has its own noise level; decisions flip gold bits at that rate.
SweepData noisy_decisions(std::size_t docs, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SweepData d;
  for (std::size_t n = 0; n < docs; ++n) {
    const double noise = 0.3 * u(rng);
    std::vector<int> row(m), g;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const bool truth = u(rng) < 0.3;
      if (truth) g.push_back(static_cast<int>(i));
      const bool flip = u(rng) < noise;
      row[i] = (truth != flip) ? 1 : 0;
      wrong += flip;
    }
    d.decisions.push_back(row);
    d.gold.push_back(g);
    d.oracle.push_back(static_cast<double>(wrong) / static_cast<double>(m));
  }
  return d;
}

TEST(Sweep, ZeroFractionEqualsFullSet) {
  const SweepData d = noisy_decisions(200, 6, 11);
  const std::vector<double> prio(200, 0.0);
  const SweepCurve c = sweep(prio, d.decisions, d.gold, 6, "x");
  const AggregateMetrics full = evaluate_decisions(d.decisions, d.gold, 6);
  EXPECT_EQ(c.f1_weighted[0], full.f1_weighted);
  EXPECT_EQ(c.exact_match[0], full.exact_match);
  ASSERT_EQ(c.fractions.size(), 10u);
  for (std::size_t i = 0; i < c.fractions.size(); ++i) {
    EXPECT_EQ(c.retained[i], static_cast<std::size_t>(std::ceil((1.0 - c.fractions[i]) * 200 - 1e-9)));
  }
}

TEST(Sweep, OraclePriorityIsMonotone) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SweepData d = noisy_decisions(1000, 8, 20 + seed);
    const SweepCurve c = sweep(d.oracle, d.decisions, d.gold, 8, "oracle");
    for (std::size_t i = 1; i < c.f1_weighted.size(); ++i) EXPECT_GE(c.f1_weighted[i], c.f1_weighted[i - 1]);
  }
}

TEST(Sweep, RandomPriorityIsFlat) {
  const SweepData d = noisy_decisions(3000, 8, 31);
  const double full = evaluate_decisions(d.decisions, d.gold, 8).f1_weighted;
  std::vector<double> mean(10, 0.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> prio(d.decisions.size());
    for (auto& p : prio) p = u(rng);
    const SweepCurve c = sweep(prio, d.decisions, d.gold, 8, "random");
    for (std::size_t i = 0; i < 10; ++i) mean[i] += c.f1_weighted[i] / 5.0;
  }
  for (double m : mean) EXPECT_NEAR(m, full, 0.02);
}

TEST(Sweep, CsvFormat) {
  const SweepData d = noisy_decisions(10, 3, 1);
  std::ostringstream out;
  sweep(d.oracle, d.decisions, d.gold, 3, "confidence", {0.0, 0.5}).write_csv(out);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "fraction,f1_weighted,em,scheme");
  std::getline(lines, line);
  EXPECT_EQ(line.substr(0, 2), "0,");
  EXPECT_EQ(line.substr(line.size() - 11), ",confidence");
}

TEST(CalibrationLinkage, ConfidencePriorityTracksError) {
  // Calibrated probabilities: gold drawn from the predicted Bernoulli.
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> prio, error;
  for (int n = 0; n < 2000; ++n) {
    const double sharp = u(rng);
    Vector p(10);
    std::vector<int> g;
    for (int i = 0; i < 10; ++i) {
      p(i) = u(rng) < 0.5 ? 0.5 * sharp * u(rng) : 1.0 - 0.5 * sharp * u(rng);
      if (u(rng) < p(i)) g.push_back(i);
    }
    const PredictionRecord r = record(p.cwiseMax(1e-6).cwiseMin(1 - 1e-6));
    prio.push_back(priority_baseline(r.confidences));
    error.push_back(1.0 - abstention_targets({r}, {g}).accuracy[0]);
  }
  const RankCorrelation rc = spearman(prio, error);
  EXPECT_GT(rc.rho, 0.0);
  EXPECT_LT(rc.p_value, 0.01);
  const auto order = drop_order(prio);
  double top = 0, bottom = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    top += error[order[i]];
    bottom += error[order[order.size() - 1 - i]];
  }
  EXPECT_GT(top, bottom);
}

}  // namespace
}  // namespace notetag
