#pragma once

// Mini-batch training with Adam, global-norm clipping and early stopping on
// validation weighted F1, plus the corpus-level prediction helpers and the
// multi-seed harness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "notetag/corpus.hpp"
#include "notetag/errors.hpp"
#include "notetag/evaluation.hpp"
#include "notetag/model.hpp"
#include "notetag/numerics.hpp"
#include "notetag/objectives.hpp"
#include "notetag/taxonomy.hpp"

namespace notetag {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamConfig, beta1, beta2, epsilon)

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;
  std::size_t max_epochs = 5;
  std::uint64_t seed = 1;
  ObjectiveConfig objective;
  AdamConfig adam;

  void validate() const {
    if (!(learning_rate > 0) || batch_size == 0 || !(clip_norm > 0)) {
      throw ConfigError("learning rate, batch size and clip norm must be positive");
    }
    if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) || !(adam.epsilon > 0)) {
      throw ConfigError("Adam decay rates must lie in [0, 1) and the stabilizer must be positive");
    }
    objective.validate();
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, learning_rate, batch_size, clip_norm, max_epochs,
                                                seed, objective, adam)

/// Returns the factor applied to every gradient: max_norm / g when the global
/// L2 norm g exceeds max_norm, else 1.
inline double clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (Parameter* p : params) p->grad *= factor;
  return factor;
}

class Adam {
 public:
  Adam(const std::vector<Parameter*>& params, double learning_rate, AdamConfig config = {})
      : params_(params), lr_(learning_rate), config_(config) {
    for (const Parameter* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = *params_[k];
      m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * p.grad;
      v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.epsilon);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  double lr_;
  AdamConfig config_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

inline Vector target_vector(const std::vector<int>& label_ids, std::size_t m) {
  Vector y = Vector::Zero(static_cast<Eigen::Index>(m));
  for (int id : label_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= m) throw IndexError("label id out of range");
    y(id) = 1.0;
  }
  return y;
}

inline GoldSets gold_sets(const std::vector<Document>& docs) {
  GoldSets out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.label_ids);
  return out;
}

inline std::vector<PredictionRecord> predict_corpus(const TaggerModel& model, const std::vector<Document>& docs) {
  std::vector<PredictionRecord> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(predict_document(model, d.token_ids));
  return out;
}

inline DecisionMatrix decision_matrix(const std::vector<PredictionRecord>& preds) {
  DecisionMatrix out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.decisions);
  return out;
}

inline AggregateMetrics evaluate_predictions(const std::vector<PredictionRecord>& preds,
                                             const std::vector<Document>& docs, std::size_t label_count) {
  return evaluate_decisions(decision_matrix(preds), gold_sets(docs), label_count);
}

inline AggregateMetrics evaluate_model(const TaggerModel& model, const std::vector<Document>& docs) {
  return evaluate_predictions(predict_corpus(model, docs), docs, static_cast<std::size_t>(model.label_count()));
}

/// Batch objective: mean over documents of BCE (+ beta * meta), plus the
/// cluster penalty once. Accumulates gradients when `with_grad`.
inline LossBreakdown batch_objective(TaggerModel& model, const std::vector<const Document*>& batch,
                                     const ObjectiveConfig& objective, const MetaGrouping& grouping,
                                     bool with_grad, const std::vector<std::mt19937_64*>& dropout = {}) {
  LossBreakdown total;
  const auto m = static_cast<std::size_t>(model.label_count());
  const auto scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Document& doc = *batch[n];
    const EncodeTrace tr = encode(model, doc.token_ids, dropout.empty() ? nullptr : dropout[n]);
    const PredictionRecord pred = predict(model, tr.features);
    Vector dlogits;
    LossBreakdown part =
        document_objective(objective, pred.probabilities, target_vector(doc.label_ids, m), grouping,
                           with_grad ? &dlogits : nullptr);
    part /= static_cast<double>(batch.size());
    total += part;
    if (with_grad) backward_document(model, tr, dlogits * scale);
  }
  const LossBreakdown pen =
      penalty_objective(objective, model.heads.value, grouping, with_grad ? &model.heads.grad : nullptr);
  total.omega_norm = pen.omega_norm;
  total.omega_between = pen.omega_between;
  total.omega_within = pen.omega_within;
  total.total += pen.total;
  return total;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown train;    // mean over batches
  double val_f1_weighted = 0.0;
  double val_em = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t chosen_epoch = 0;  // 0 when no epoch ran

  /// Deterministic columns only; wall-clock time stays in memory.
  void write_csv(std::ostream& out) const {
    out << "epoch,train_total,train_bce,omega_norm,omega_between,omega_within,meta_loss,val_f1_weighted,val_em\n";
    out << std::setprecision(17);
    for (const auto& e : epochs) {
      out << e.epoch << ',' << e.train.total << ',' << e.train.bce << ',' << e.train.omega_norm << ','
          << e.train.omega_between << ',' << e.train.omega_within << ',' << e.train.meta << ','
          << e.val_f1_weighted << ',' << e.val_em << '\n';
    }
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write history: " + path);
    write_csv(out);
  }
};

namespace detail {

inline std::mt19937_64 dropout_stream(std::uint64_t seed, std::size_t epoch, std::size_t step, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(step),
                    static_cast<std::uint32_t>(index), 0x64726f70u};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Trains in place and restores the parameters of the best validation epoch.
inline TrainHistory train(TaggerModel& model, const std::vector<Document>& train_docs,
                          const std::vector<Document>& val_docs, const Taxonomy& taxonomy,
                          const TrainConfig& config) {
  config.validate();
  TrainHistory history;
  if (config.max_epochs == 0) return history;
  if (train_docs.empty() || val_docs.empty()) throw ConfigError("train: training and validation splits must be non-empty");
  if (taxonomy.labels.size() != static_cast<std::size_t>(model.label_count())) {
    throw DimensionError("train: taxonomy has " + std::to_string(taxonomy.labels.size()) + " labels, model has " +
                         std::to_string(model.label_count()));
  }

  const auto params = model.parameters();
  Adam adam(params, config.learning_rate, config.adam);
  std::mt19937_64 shuffle_rng(config.seed);
  std::vector<std::size_t> order(train_docs.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<Matrix> best;
  double best_metric = -1.0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const Document*> batch;
      std::vector<std::mt19937_64> streams;
      streams.reserve(end - begin);
      std::vector<std::mt19937_64*> dropout;
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(&train_docs[order[i]]);
        streams.push_back(detail::dropout_stream(config.seed, epoch, step, i - begin));
      }
      for (auto& s : streams) dropout.push_back(&s);

      model.zero_grad();
      const LossBreakdown loss =
          batch_objective(model, batch, config.objective, taxonomy.grouping, true, dropout);
      if (!std::isfinite(loss.total)) {
        throw DivergenceError("train: loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches + 1));
      }
      clip_gradients(params, config.clip_norm);
      adam.step();
      rec.train += loss;
      ++batches;
      ++step;
    }
    rec.train /= static_cast<double>(batches);

    const AggregateMetrics val = evaluate_model(model, val_docs);
    rec.val_f1_weighted = val.f1_weighted;
    rec.val_em = val.exact_match;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);

    if (val.f1_weighted > best_metric) {
      best_metric = val.f1_weighted;
      history.chosen_epoch = epoch;
      best.clear();
      for (const Parameter* p : params) best.push_back(p->value);
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best[k];
  model.zero_grad();
  return history;
}

/// Vocabulary from the training split, then token ids for every split.
inline Vocabulary index_splits(CorpusSplit& s, std::size_t max_tokens = kDefaultMaxTokens,
                               std::size_t min_freq = 1) {
  std::vector<TokenSequence> tokens;
  tokens.reserve(s.train.size());
  for (const auto& d : s.train) tokens.push_back(d.tokens);
  Vocabulary vocab = build_vocab(tokens, min_freq);
  assign_token_ids(s.train, vocab, max_tokens);
  assign_token_ids(s.validation, vocab, max_tokens);
  assign_token_ids(s.test, vocab, max_tokens);
  return vocab;
}

/// Element-wise mean of per-seed aggregates.
inline AggregateMetrics mean_metrics(const std::vector<AggregateMetrics>& runs) {
  AggregateMetrics out;
  if (runs.empty()) return out;
  for (const auto& r : runs) {
    out.precision_unweighted += r.precision_unweighted;
    out.recall_unweighted += r.recall_unweighted;
    out.f1_unweighted += r.f1_unweighted;
    out.precision_weighted += r.precision_weighted;
    out.recall_weighted += r.recall_weighted;
    out.f1_weighted += r.f1_weighted;
    out.exact_match += r.exact_match;
    out.documents += r.documents;
  }
  const auto n = static_cast<double>(runs.size());
  out.precision_unweighted /= n;
  out.recall_unweighted /= n;
  out.f1_unweighted /= n;
  out.precision_weighted /= n;
  out.recall_weighted /= n;
  out.f1_weighted /= n;
  out.exact_match /= n;
  out.documents /= runs.size();
  return out;
}

/// Runs `fn(seed)` for each seed and averages the returned metrics.
template <typename Fn>
AggregateMetrics multi_seed(const std::vector<std::uint64_t>& seeds, Fn&& fn) {
  std::vector<AggregateMetrics> runs;
  for (auto s : seeds) runs.push_back(fn(s));
  return mean_metrics(runs);
}

}  // namespace notetag
