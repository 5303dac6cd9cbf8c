#pragma once

// Per-label and aggregate tagging metrics, exact match, calibration bins and
// the regression of per-label F1 on training support and subtype count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <Eigen/Dense>

#include "json.hpp"

#include "notetag/errors.hpp"
#include "notetag/numerics.hpp"
#include "notetag/taxonomy.hpp"

namespace notetag {

/// One row of 0/1 decisions per document.
using DecisionMatrix = std::vector<std::vector<int>>;
/// Gold label-id set per document.
using GoldSets = std::vector<std::vector<int>>;

inline std::vector<int> to_indicator(const std::vector<int>& label_ids, std::size_t m) {
  std::vector<int> out(m, 0);
  for (int id : label_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= m) throw IndexError("label id out of range");
    out[static_cast<std::size_t>(id)] = 1;
  }
  return out;
}

struct LabelMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::size_t support = 0;  // gold positives in the evaluated documents
  std::size_t subtypes = 0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

/// Confusion-matrix metrics per label. Undefined ratios are reported as 0 and
/// flagged. `subtypes` may be empty.
inline std::vector<LabelMetrics> per_label_metrics(const DecisionMatrix& decisions, const GoldSets& gold,
                                                   std::size_t label_count,
                                                   const std::vector<std::size_t>& subtypes = {}) {
  if (decisions.size() != gold.size()) throw DimensionError("per_label_metrics: document counts differ");
  if (!subtypes.empty() && subtypes.size() != label_count) {
    throw DimensionError("per_label_metrics: subtype count list has the wrong length");
  }
  std::vector<LabelMetrics> out(label_count);
  for (std::size_t n = 0; n < decisions.size(); ++n) {
    if (decisions[n].size() != label_count) {
      throw DimensionError("per_label_metrics: document " + std::to_string(n) + " has " +
                           std::to_string(decisions[n].size()) + " decisions, expected " +
                           std::to_string(label_count));
    }
    const auto truth = to_indicator(gold[n], label_count);
    for (std::size_t i = 0; i < label_count; ++i) {
      const bool p = decisions[n][i] != 0;
      const bool t = truth[i] != 0;
      auto& m = out[i];
      if (p && t) ++m.tp;
      else if (p && !t) ++m.fp;
      else if (!p && t) ++m.fn;
      else ++m.tn;
    }
  }
  const auto total = static_cast<double>(decisions.size());
  for (std::size_t i = 0; i < label_count; ++i) {
    auto& m = out[i];
    m.support = m.tp + m.fn;
    m.subtypes = subtypes.empty() ? 0 : subtypes[i];
    if (m.tp + m.fp == 0) m.precision_undefined = true;
    else m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    if (m.tp + m.fn == 0) m.recall_undefined = true;
    else m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    if (m.precision + m.recall == 0.0) m.f1_undefined = true;
    else m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    m.accuracy = total > 0 ? static_cast<double>(m.tp + m.tn) / total : 0.0;
  }
  return out;
}

struct AggregateMetrics {
  double precision_unweighted = 0.0;
  double recall_unweighted = 0.0;
  double f1_unweighted = 0.0;
  double precision_weighted = 0.0;
  double recall_weighted = 0.0;
  double f1_weighted = 0.0;
  double exact_match = 0.0;
  std::size_t documents = 0;
};

/// Fraction of documents whose decision set equals the gold set.
inline double exact_match(const DecisionMatrix& decisions, const GoldSets& gold) {
  if (decisions.size() != gold.size()) throw DimensionError("exact_match: document counts differ");
  if (decisions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < decisions.size(); ++n) {
    if (decisions[n] == to_indicator(gold[n], decisions[n].size())) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(decisions.size());
}

/// Plain mean over labels, support-weighted mean, and exact match.
inline AggregateMetrics aggregate(const std::vector<LabelMetrics>& metrics, const DecisionMatrix& decisions,
                                  const GoldSets& gold) {
  AggregateMetrics a;
  a.documents = decisions.size();
  if (!metrics.empty()) {
    double total_support = 0.0;
    for (const auto& m : metrics) {
      a.precision_unweighted += m.precision;
      a.recall_unweighted += m.recall;
      a.f1_unweighted += m.f1;
      const auto w = static_cast<double>(m.support);
      a.precision_weighted += w * m.precision;
      a.recall_weighted += w * m.recall;
      a.f1_weighted += w * m.f1;
      total_support += w;
    }
    const auto n = static_cast<double>(metrics.size());
    a.precision_unweighted /= n;
    a.recall_unweighted /= n;
    a.f1_unweighted /= n;
    if (total_support > 0) {
      a.precision_weighted /= total_support;
      a.recall_weighted /= total_support;
      a.f1_weighted /= total_support;
    }
  }
  a.exact_match = exact_match(decisions, gold);
  return a;
}

/// Convenience: per-label metrics and their aggregate in one call.
inline AggregateMetrics evaluate_decisions(const DecisionMatrix& decisions, const GoldSets& gold,
                                           std::size_t label_count) {
  return aggregate(per_label_metrics(decisions, gold, label_count), decisions, gold);
}

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_predicted = 0.0;
  double positive_frequency = 0.0;
  std::size_t count = 0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double expected_calibration_error = 0.0;
  std::size_t total = 0;
};

/// Equal-width, right-inclusive bins: (b/B, (b+1)/B], with 0 in the first bin.
inline std::size_t calibration_bin(double p, std::size_t bins) {
  const auto b = static_cast<double>(bins);
  auto idx = static_cast<long>(std::ceil(p * b)) - 1;
  if (idx > 0 && p <= static_cast<double>(idx) / b) --idx;
  if (idx + 1 < static_cast<long>(bins) && p > static_cast<double>(idx + 1) / b) ++idx;
  return static_cast<std::size_t>(std::clamp<long>(idx, 0, static_cast<long>(bins) - 1));
}

/// Every (document, label) probability is one instance.
inline CalibrationReport calibration_report(const std::vector<Vector>& probabilities, const GoldSets& gold,
                                            std::size_t bins = 10) {
  if (bins < 1) throw ConfigError("calibration_report: need at least one bin");
  if (probabilities.size() != gold.size()) throw DimensionError("calibration_report: document counts differ");
  CalibrationReport r;
  r.bins.resize(bins);
  std::vector<double> sum_p(bins, 0.0), sum_y(bins, 0.0);
  for (std::size_t n = 0; n < probabilities.size(); ++n) {
    const auto& p = probabilities[n];
    const auto truth = to_indicator(gold[n], static_cast<std::size_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (!(p(i) >= 0.0 && p(i) <= 1.0)) throw InvalidInputError("calibration_report: probability outside [0,1]");
      const std::size_t b = calibration_bin(p(i), bins);
      sum_p[b] += p(i);
      sum_y[b] += truth[static_cast<std::size_t>(i)];
      ++r.bins[b].count;
      ++r.total;
    }
  }
  for (std::size_t b = 0; b < bins; ++b) {
    auto& bin = r.bins[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(bins);
    if (bin.count == 0) continue;
    bin.mean_predicted = sum_p[b] / static_cast<double>(bin.count);
    bin.positive_frequency = sum_y[b] / static_cast<double>(bin.count);
    r.expected_calibration_error += static_cast<double>(bin.count) / static_cast<double>(r.total) *
                                    std::abs(bin.positive_frequency - bin.mean_predicted);
  }
  return r;
}

struct RegressionResult {
  // Order: intercept, log N, subtype count.
  std::vector<double> coefficients;
  std::vector<double> std_errors;
  std::vector<double> t_statistics;
  std::vector<double> p_values;
  std::size_t observations = 0;
  double r_squared = 0.0;
};

inline double two_sided_t_p_value(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/// Ordinary least squares of F1 on (1, log N, subtype count) via the normal
/// equations, with classical t-tests. Labels with zero support are skipped.
inline RegressionResult subtype_regression(const std::vector<double>& f1, const std::vector<double>& support,
                                           const std::vector<double>& subtypes) {
  if (f1.size() != support.size() || f1.size() != subtypes.size()) {
    throw DimensionError("subtype_regression: input lengths differ");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    if (support[i] > 0) rows.push_back(i);
  }
  constexpr Eigen::Index kCoefficients = 3;
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n <= kCoefficients) {
    throw SingularityError("subtype_regression: " + std::to_string(n) +
                           " labels with support leave no residual degrees of freedom");
  }
  Matrix x(n, kCoefficients);
  Vector y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t i = rows[static_cast<std::size_t>(r)];
    x(r, 0) = 1.0;
    x(r, 1) = std::log(support[i]);
    x(r, 2) = subtypes[i];
    y(r) = f1[i];
  }
  Eigen::FullPivLU<Matrix> lu(x);
  lu.setThreshold(1e-10);
  if (lu.rank() < kCoefficients) throw SingularityError("subtype_regression: design matrix is rank deficient");

  const Matrix xtx = x.transpose() * x;
  const Matrix xtx_inv = xtx.inverse();
  const Vector beta = xtx_inv * (x.transpose() * y);
  const Vector resid = y - x * beta;
  const double dof = static_cast<double>(n - kCoefficients);
  const double sigma2 = resid.squaredNorm() / dof;
  const double ss_tot = (y.array() - y.mean()).square().sum();

  RegressionResult out;
  out.observations = static_cast<std::size_t>(n);
  out.r_squared = ss_tot > 0 ? 1.0 - resid.squaredNorm() / ss_tot : 1.0;
  for (Eigen::Index k = 0; k < kCoefficients; ++k) {
    const double se = std::sqrt(sigma2 * xtx_inv(k, k));
    const double t = beta(k) / se;
    out.coefficients.push_back(beta(k));
    out.std_errors.push_back(se);
    out.t_statistics.push_back(t);
    out.p_values.push_back(two_sided_t_p_value(t, dof));
  }
  return out;
}

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

struct RankCorrelation {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided, t approximation
};

inline RankCorrelation spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 3) throw DimensionError("spearman: need >= 3 aligned pairs");
  const auto ra = detail::average_ranks(a);
  const auto rb = detail::average_ranks(b);
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  RankCorrelation r;
  if (saa == 0 || sbb == 0) return r;
  r.rho = sab / std::sqrt(saa * sbb);
  const double t = r.rho * std::sqrt((n - 2.0) / std::max(1e-300, 1.0 - r.rho * r.rho));
  r.p_value = two_sided_t_p_value(t, n - 2.0);
  return r;
}

// ---------------------------------------------------------------------------
// Reports

/// Per-label table: label,N,Prec,Rec,F1,Accu,Sub (percentages, as in the
/// usual tagging tables). N is the training support.
inline void write_label_report(std::ostream& out, const LabelSet& labels, const std::vector<LabelMetrics>& metrics,
                               const std::vector<std::size_t>& train_support) {
  out << "label,N,Prec,Rec,F1,Accu,Sub\n";
  out << std::fixed << std::setprecision(1);
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto& m = metrics[i];
    out << labels[i].code << ',' << (i < train_support.size() ? train_support[i] : 0) << ','
        << 100.0 * m.precision << ',' << 100.0 * m.recall << ',' << 100.0 * m.f1 << ',' << 100.0 * m.accuracy
        << ',' << m.subtypes << '\n';
  }
}

inline nlohmann::json aggregate_to_json(const AggregateMetrics& a) {
  return {{"EM", a.exact_match},
          {"precision", {{"unweighted", a.precision_unweighted}, {"weighted", a.precision_weighted}}},
          {"recall", {{"unweighted", a.recall_unweighted}, {"weighted", a.recall_weighted}}},
          {"f1", {{"unweighted", a.f1_unweighted}, {"weighted", a.f1_weighted}}},
          {"documents", a.documents}};
}

/// label,log_n,f1 for labels with positive training support.
inline void write_scatter(std::ostream& out, const LabelSet& labels, const std::vector<LabelMetrics>& metrics,
                          const std::vector<std::size_t>& train_support) {
  out << "label,log_n,f1\n";
  out << std::setprecision(10);
  for (std::size_t i = 0; i < metrics.size() && i < train_support.size(); ++i) {
    if (train_support[i] == 0) continue;
    out << labels[i].code << ',' << std::log(static_cast<double>(train_support[i])) << ',' << metrics[i].f1
        << '\n';
  }
}

}  // namespace notetag
