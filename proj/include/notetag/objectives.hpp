#pragma once

// Training losses: per-label binary cross-entropy, the cluster penalty on
// head vectors, the noisy-OR meta-label loss, and their weighted sum.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "notetag/errors.hpp"
#include "notetag/numerics.hpp"
#include "notetag/taxonomy.hpp"

namespace notetag {

inline constexpr double kProbabilityClamp = 1e-7;

inline double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

/// Loss value plus its gradient with respect to the pre-sigmoid logits.
struct LossWithGrad {
  double value = 0.0;
  Vector dlogits;
};

/// Mean binary cross-entropy over labels, probabilities clamped before the
/// logarithms. The logit gradient is (p - y) / m; it ignores the clamp, which
/// only matters for logits beyond about +-16.
inline LossWithGrad bce_loss(const Vector& probs, const Vector& targets) {
  if (probs.size() != targets.size() || probs.size() == 0) {
    throw DimensionError("bce_loss: probability and target lengths differ");
  }
  const auto m = static_cast<double>(probs.size());
  LossWithGrad out;
  out.dlogits.resize(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = clamp_probability(probs(i));
    const double y = targets(i);
    out.value -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    out.dlogits(i) = (probs(i) - y) / m;
  }
  out.value /= m;
  return out;
}

struct ClusterPenalty {
  double norm = 0.0;
  double between = 0.0;
  double within = 0.0;
};

struct ClusterPenaltyGrads {
  Matrix norm;
  Matrix between;
  Matrix within;
};

/// Penalty terms over the head rows named by the grouping (spurious excluded):
///   norm    = sum_i |theta_i|^2
///   between = sum_k |mean_k - mean|^2
///   within  = sum_k sum_{i in J(k)} |theta_i - mean_k|^2
/// where mean is taken over all penalized heads. `heads` holds one head per row.
inline ClusterPenalty cluster_penalty(const Matrix& heads, const MetaGrouping& grouping,
                                      ClusterPenaltyGrads* grads = nullptr) {
  std::vector<int> seen(static_cast<std::size_t>(heads.rows()), 0);
  std::size_t penalized = 0;
  for (const auto& members : grouping.members) {
    if (members.empty()) throw PartitionError("cluster_penalty: empty cluster");
    for (int i : members) {
      if (i < 0 || i >= heads.rows()) throw PartitionError("cluster_penalty: member out of range");
      if (seen[static_cast<std::size_t>(i)]++) {
        throw PartitionError("cluster_penalty: head " + std::to_string(i) + " in two clusters");
      }
      ++penalized;
    }
  }
  if (penalized == 0) throw PartitionError("cluster_penalty: no penalized heads");

  const Eigen::Index dim = heads.cols();
  RowVector overall = RowVector::Zero(dim);
  for (const auto& members : grouping.members) {
    for (int i : members) overall += heads.row(i);
  }
  overall /= static_cast<double>(penalized);

  std::vector<RowVector> cluster_mean;
  for (const auto& members : grouping.members) {
    RowVector mean = RowVector::Zero(dim);
    for (int i : members) mean += heads.row(i);
    cluster_mean.push_back(mean / static_cast<double>(members.size()));
  }

  ClusterPenalty out;
  RowVector offset_sum = RowVector::Zero(dim);
  for (std::size_t k = 0; k < grouping.members.size(); ++k) {
    const RowVector offset = cluster_mean[k] - overall;
    out.between += offset.squaredNorm();
    offset_sum += offset;
    for (int i : grouping.members[k]) {
      out.norm += heads.row(i).squaredNorm();
      out.within += (heads.row(i) - cluster_mean[k]).squaredNorm();
    }
  }

  if (grads) {
    grads->norm = Matrix::Zero(heads.rows(), dim);
    grads->between = Matrix::Zero(heads.rows(), dim);
    grads->within = Matrix::Zero(heads.rows(), dim);
    const RowVector global_term = 2.0 * offset_sum / static_cast<double>(penalized);
    for (std::size_t k = 0; k < grouping.members.size(); ++k) {
      const double size = static_cast<double>(grouping.members[k].size());
      const RowVector offset = cluster_mean[k] - overall;
      for (int i : grouping.members[k]) {
        grads->norm.row(i) = 2.0 * heads.row(i);
        grads->within.row(i) = 2.0 * (heads.row(i) - cluster_mean[k]);
        grads->between.row(i) = 2.0 * offset / size - global_term;
      }
    }
  }
  return out;
}

/// Noisy-OR presence probability of each meta label:
///   p_k = 1 - prod_{i in J(k)} (1 - p_i)
inline Vector meta_probabilities(const Vector& probs, const MetaGrouping& grouping) {
  Vector out(static_cast<Eigen::Index>(grouping.size()));
  for (std::size_t k = 0; k < grouping.size(); ++k) {
    double absent = 1.0;
    for (int i : grouping.members[k]) {
      if (i < 0 || i >= probs.size()) throw DimensionError("meta_probabilities: member out of range");
      absent *= 1.0 - probs(i);
    }
    out(static_cast<Eigen::Index>(k)) = 1.0 - absent;
  }
  return out;
}

/// A meta label is present when any member label is.
inline Vector meta_targets(const Vector& targets, const MetaGrouping& grouping) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(grouping.size()));
  for (std::size_t k = 0; k < grouping.size(); ++k) {
    for (int i : grouping.members[k]) {
      if (targets(i) > 0.5) out(static_cast<Eigen::Index>(k)) = 1.0;
    }
  }
  return out;
}

/// Binary cross-entropy between noisy-OR meta probabilities and OR-composed
/// meta targets, averaged over the K clusters. Gradient is w.r.t. the label logits.
inline LossWithGrad meta_loss(const Vector& probs, const Vector& targets, const MetaGrouping& grouping) {
  if (probs.size() != targets.size()) throw DimensionError("meta_loss: length mismatch");
  if (grouping.size() == 0) throw PartitionError("meta_loss: empty grouping");
  const auto big_k = static_cast<double>(grouping.size());
  const Vector meta_p = meta_probabilities(probs, grouping);
  const Vector meta_y = meta_targets(targets, grouping);
  LossWithGrad out;
  out.dlogits = Vector::Zero(probs.size());
  for (std::size_t k = 0; k < grouping.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double p = clamp_probability(meta_p(kk));
    const double y = meta_y(kk);
    out.value -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    const double dl_dp = -(y / p - (1.0 - y) / (1.0 - p)) / big_k;
    const auto& members = grouping.members[k];
    for (int i : members) {
      double others_absent = 1.0;
      for (int j : members) {
        if (j != i) others_absent *= 1.0 - probs(j);
      }
      out.dlogits(i) += dl_dp * others_absent * probs(i) * (1.0 - probs(i));
    }
  }
  out.value /= big_k;
  return out;
}

enum class ObjectiveMode { kBaseline, kCluster, kMeta };

inline std::string to_string(ObjectiveMode m) {
  switch (m) {
    case ObjectiveMode::kBaseline:
      return "baseline";
    case ObjectiveMode::kCluster:
      return "cluster";
    case ObjectiveMode::kMeta:
      return "meta";
  }
  return "baseline";
}

inline ObjectiveMode parse_objective_mode(const std::string& s) {
  if (s == "baseline") return ObjectiveMode::kBaseline;
  if (s == "cluster") return ObjectiveMode::kCluster;
  if (s == "meta") return ObjectiveMode::kMeta;
  throw ConfigError("unknown objective mode: " + s);
}

struct ObjectiveConfig {
  ObjectiveMode mode = ObjectiveMode::kBaseline;
  double gamma_norm = 0.0;
  double gamma_between = 0.0;
  double gamma_within = 0.0;
  double beta = 0.0;

  static ObjectiveConfig baseline() { return {}; }
  static ObjectiveConfig cluster(double norm = 1e-4, double between = 1e-3, double within = 1e-3) {
    return {ObjectiveMode::kCluster, norm, between, within, 0.0};
  }
  static ObjectiveConfig meta(double beta = 1e-3) { return {ObjectiveMode::kMeta, 0.0, 0.0, 0.0, beta}; }

  bool uses_cluster_penalty() const { return mode == ObjectiveMode::kCluster; }
  bool uses_meta_loss() const { return mode == ObjectiveMode::kMeta; }

  void validate() const {
    const bool gammas_zero = gamma_norm == 0.0 && gamma_between == 0.0 && gamma_within == 0.0;
    if (gamma_norm < 0 || gamma_between < 0 || gamma_within < 0 || beta < 0) {
      throw ConfigError("objective weights must be non-negative");
    }
    if (mode == ObjectiveMode::kBaseline && !(gammas_zero && beta == 0.0)) {
      throw ConfigError("baseline mode takes no gamma or beta weights");
    }
    if (mode == ObjectiveMode::kCluster && beta != 0.0) {
      throw ConfigError("cluster mode takes no beta weight");
    }
    if (mode == ObjectiveMode::kMeta && !gammas_zero) {
      throw ConfigError("meta mode takes no gamma weights");
    }
  }
};

inline void to_json(nlohmann::json& j, const ObjectiveConfig& c) {
  j = {{"mode", to_string(c.mode)},
       {"gamma_norm", c.gamma_norm},
       {"gamma_between", c.gamma_between},
       {"gamma_within", c.gamma_within},
       {"beta", c.beta}};
}

inline void from_json(const nlohmann::json& j, ObjectiveConfig& c) {
  c = ObjectiveConfig{};
  if (j.contains("mode")) c.mode = parse_objective_mode(j.at("mode").get<std::string>());
  c.gamma_norm = j.value("gamma_norm", 0.0);
  c.gamma_between = j.value("gamma_between", 0.0);
  c.gamma_within = j.value("gamma_within", 0.0);
  c.beta = j.value("beta", 0.0);
}

struct LossBreakdown {
  double bce = 0.0;
  double omega_norm = 0.0;
  double omega_between = 0.0;
  double omega_within = 0.0;
  double meta = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    bce += o.bce;
    omega_norm += o.omega_norm;
    omega_between += o.omega_between;
    omega_within += o.omega_within;
    meta += o.meta;
    total += o.total;
    return *this;
  }

  LossBreakdown& operator/=(double s) {
    bce /= s;
    omega_norm /= s;
    omega_between /= s;
    omega_within /= s;
    meta /= s;
    total /= s;
    return *this;
  }
};

/// Per-document part of the objective (BCE plus the weighted meta loss).
inline LossBreakdown document_objective(const ObjectiveConfig& config, const Vector& probs,
                                        const Vector& targets, const MetaGrouping& grouping,
                                        Vector* dlogits) {
  LossBreakdown out;
  LossWithGrad bce = bce_loss(probs, targets);
  out.bce = bce.value;
  out.total = bce.value;
  if (config.uses_meta_loss()) {
    LossWithGrad meta = meta_loss(probs, targets, grouping);
    out.meta = meta.value;
    out.total += config.beta * meta.value;
    bce.dlogits += config.beta * meta.dlogits;
  }
  if (dlogits) *dlogits = std::move(bce.dlogits);
  return out;
}

/// Parameter part of the objective (the weighted cluster penalty). Adds the
/// gradient into `dheads` when given.
inline LossBreakdown penalty_objective(const ObjectiveConfig& config, const Matrix& heads,
                                       const MetaGrouping& grouping, Matrix* dheads) {
  LossBreakdown out;
  if (!config.uses_cluster_penalty()) return out;
  ClusterPenaltyGrads g;
  const ClusterPenalty p = cluster_penalty(heads, grouping, dheads ? &g : nullptr);
  out.omega_norm = p.norm;
  out.omega_between = p.between;
  out.omega_within = p.within;
  out.total = config.gamma_norm * p.norm + config.gamma_between * p.between +
              config.gamma_within * p.within;
  if (dheads) {
    *dheads += config.gamma_norm * g.norm + config.gamma_between * g.between +
               config.gamma_within * g.within;
  }
  return out;
}

/// Full objective for one document: BCE + gamma . Omega (cluster mode) or
/// BCE + beta * L_meta (meta mode).
inline LossBreakdown total_objective(const ObjectiveConfig& config, const Vector& probs,
                                     const Vector& targets, const Matrix& heads,
                                     const MetaGrouping& grouping, Vector* dlogits = nullptr,
                                     Matrix* dheads = nullptr) {
  config.validate();
  LossBreakdown out = document_objective(config, probs, targets, grouping, dlogits);
  const LossBreakdown pen = penalty_objective(config, heads, grouping, dheads);
  out.omega_norm = pen.omega_norm;
  out.omega_between = pen.omega_between;
  out.omega_within = pen.omega_within;
  out.total += pen.total;
  return out;
}

}  // namespace notetag
