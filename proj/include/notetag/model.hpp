#pragma once

// Bidirectional LSTM tagger: embedding lookup, forward and reverse LSTM
// passes, global max pooling over time, dropout on the pooled vector and one
// bias-free logistic head per label. Backward transforms are written out by
// hand and certified by grad_check in the tests.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "notetag/errors.hpp"
#include "notetag/numerics.hpp"
#include "notetag/taxonomy.hpp"
#include "notetag/text.hpp"

namespace notetag {

/// Gate order used throughout: forget, input, output, candidate.
enum Gate : std::size_t { kForget = 0, kInput = 1, kOutput = 2, kCandidate = 3 };
inline constexpr std::array<const char*, 4> kGateNames = {"f", "i", "o", "c"};

struct LstmCell {
  std::array<Parameter, 4> W;  // hidden x input
  std::array<Parameter, 4> V;  // hidden x hidden
  std::array<Parameter, 4> b;  // hidden x 1

  Eigen::Index hidden() const { return W[0].value.rows(); }
  Eigen::Index input() const { return W[0].value.cols(); }

  static LstmCell zeros(Eigen::Index input, Eigen::Index hidden, const std::string& prefix) {
    LstmCell cell;
    for (std::size_t g = 0; g < 4; ++g) {
      cell.W[g] = Parameter(prefix + ".W_" + kGateNames[g], Matrix::Zero(hidden, input));
      cell.V[g] = Parameter(prefix + ".V_" + kGateNames[g], Matrix::Zero(hidden, hidden));
      cell.b[g] = Parameter(prefix + ".b_" + kGateNames[g], Matrix::Zero(hidden, 1));
    }
    return cell;
  }

  /// Weights uniform in [-1/sqrt(d), 1/sqrt(d)], biases zero.
  template <typename Rng>
  static LstmCell random(Eigen::Index input, Eigen::Index hidden, const std::string& prefix, Rng& rng) {
    LstmCell cell = zeros(input, hidden, prefix);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t g = 0; g < 4; ++g) {
      for (Eigen::Index i = 0; i < cell.W[g].value.size(); ++i) cell.W[g].value.data()[i] = u(rng);
      for (Eigen::Index i = 0; i < cell.V[g].value.size(); ++i) cell.V[g].value.data()[i] = u(rng);
    }
    return cell;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto* group : {&W, &V, &b}) {
      for (auto& p : *group) out.push_back(&p);
    }
    return out;
  }
};

/// Everything the backward pass needs from one run over a sequence.
struct LstmTrace {
  Matrix x;                    // T x D
  RowVector h0, c0;            // initial states
  std::array<Matrix, 4> gate;  // T x d, post-activation
  Matrix c;                    // T x d cell states
  Matrix tanh_c;               // T x d
  Matrix h;                    // T x d hidden states
};

/// Runs the six-equation recurrence over the rows of x:
///   f,i,o = sigmoid(W x_t + V h_{t-1} + b), c~ = tanh(W_c x_t + V_c h_{t-1} + b_c)
///   c_t = f * c_{t-1} + i * c~,  h_t = o * tanh(c_t)
inline LstmTrace lstm_forward(const LstmCell& cell, const Matrix& x, const RowVector& h0,
                              const RowVector& c0) {
  const Eigen::Index d = cell.hidden();
  if (x.cols() != cell.input() || h0.size() != d || c0.size() != d) {
    throw DimensionError("lstm: input has " + std::to_string(x.cols()) + " columns, cell expects " +
                         std::to_string(cell.input()) + "; state size must be " + std::to_string(d));
  }
  const Eigen::Index steps = x.rows();
  LstmTrace tr;
  tr.x = x;
  tr.h0 = h0;
  tr.c0 = c0;
  for (std::size_t g = 0; g < 4; ++g) {
    tr.gate[g].noalias() = x * cell.W[g].value.transpose();
    tr.gate[g].rowwise() += cell.b[g].value.col(0).transpose();
  }
  tr.c.resize(steps, d);
  tr.tanh_c.resize(steps, d);
  tr.h.resize(steps, d);

  RowVector h_prev = h0;
  RowVector c_prev = c0;
  RowVector pre(d);
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (std::size_t g = 0; g < 4; ++g) {
      pre.noalias() = tr.gate[g].row(t) + h_prev * cell.V[g].value.transpose();
      if (g == kCandidate) {
        tr.gate[g].row(t) = pre.array().tanh();
      } else {
        tr.gate[g].row(t) = pre.unaryExpr([](double v) { return sigmoid(v); });
      }
    }
    tr.c.row(t) = tr.gate[kForget].row(t).cwiseProduct(c_prev) +
                  tr.gate[kInput].row(t).cwiseProduct(tr.gate[kCandidate].row(t));
    tr.tanh_c.row(t) = tr.c.row(t).array().tanh();
    tr.h.row(t) = tr.gate[kOutput].row(t).cwiseProduct(tr.tanh_c.row(t));
    h_prev = tr.h.row(t);
    c_prev = tr.c.row(t);
  }
  return tr;
}

struct LstmInputGrads {
  Matrix x;  // T x D
  RowVector h0;
  RowVector c0;
};

/// Backpropagation through time. `dh` holds the gradient arriving at every
/// h_t from outside the recurrence; `dh_last`/`dc_last` arrive at the final
/// states. Parameter gradients accumulate into the cell's grad fields.
inline LstmInputGrads lstm_backward(LstmCell& cell, const LstmTrace& tr, const Matrix& dh,
                                    const RowVector& dh_last, const RowVector& dc_last) {
  const Eigen::Index d = cell.hidden();
  const Eigen::Index steps = tr.x.rows();
  if (dh.rows() != steps || dh.cols() != d) throw DimensionError("lstm_backward: dh shape mismatch");
  std::array<Matrix, 4> dpre;
  for (auto& m : dpre) m.resize(steps, d);

  RowVector dh_next = dh_last;
  RowVector dc_next = dc_last;
  RowVector dhh(d), dc(d);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const auto f = tr.gate[kForget].row(t).array();
    const auto i = tr.gate[kInput].row(t).array();
    const auto o = tr.gate[kOutput].row(t).array();
    const auto cand = tr.gate[kCandidate].row(t).array();
    const auto tc = tr.tanh_c.row(t).array();
    const RowVector c_prev = t > 0 ? RowVector(tr.c.row(t - 1)) : tr.c0;

    dhh = dh.row(t) + dh_next;
    dc = (dhh.array() * o * (1.0 - tc * tc)).matrix() + dc_next;
    dpre[kOutput].row(t) = dhh.array() * tc * o * (1.0 - o);
    dpre[kForget].row(t) = dc.array() * c_prev.array() * f * (1.0 - f);
    dpre[kInput].row(t) = dc.array() * cand * i * (1.0 - i);
    dpre[kCandidate].row(t) = dc.array() * i * (1.0 - cand * cand);
    dc_next = dc.cwiseProduct(tr.gate[kForget].row(t));
    dh_next.setZero();
    for (std::size_t g = 0; g < 4; ++g) dh_next.noalias() += dpre[g].row(t) * cell.V[g].value;
  }

  LstmInputGrads out;
  out.x = Matrix::Zero(steps, cell.input());
  for (std::size_t g = 0; g < 4; ++g) {
    cell.W[g].grad.noalias() += dpre[g].transpose() * tr.x;
    if (steps > 1) {
      cell.V[g].grad.noalias() +=
          dpre[g].bottomRows(steps - 1).transpose() * tr.h.topRows(steps - 1);
    }
    if (steps > 0) cell.V[g].grad.noalias() += dpre[g].row(0).transpose() * tr.h0;
    cell.b[g].grad.col(0) += dpre[g].colwise().sum().transpose();
    out.x.noalias() += dpre[g] * cell.W[g].value;
  }
  out.h0 = dh_next;
  out.c0 = dc_next;
  return out;
}

struct StepResult {
  RowVector h;
  RowVector c;
};

/// One recurrence step.
inline StepResult lstm_step(const LstmCell& cell, const RowVector& x, const RowVector& h_prev,
                            const RowVector& c_prev) {
  const LstmTrace tr = lstm_forward(cell, Matrix(x), h_prev, c_prev);
  return {tr.h.row(0), tr.c.row(0)};
}

struct ModelConfig {
  std::size_t embedding_dim = 100;
  std::size_t hidden = 512;
  std::size_t labels = 42;
  double dropout = 0.2;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::uint64_t seed = 1;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, embedding_dim, hidden, labels, dropout,
                                                max_tokens, seed)

/// Per-label outputs for one document.
struct PredictionRecord {
  Vector probabilities;
  std::vector<int> decisions;
  Vector confidences;
  Vector logits;
  Vector pooled;
};

/// d(p) = 0 when p <= 0.5, 1 when p > 0.5.
inline std::vector<int> decide(const Vector& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index i = 0; i < probs.size(); ++i) out[static_cast<std::size_t>(i)] = probs(i) > 0.5 ? 1 : 0;
  return out;
}

/// g(p) = p when p > 0.5, else 1 - p.
inline Vector confidence(const Vector& probs) {
  return probs.unaryExpr([](double p) { return p > 0.5 ? p : 1.0 - p; });
}

/// Forward state kept for the backward pass of one document.
struct EncodeTrace {
  TokenIds ids;
  LstmTrace forward;
  LstmTrace backward;  // run over the reversed sequence
  Matrix states;       // T x 2d, row t = [fwd h_t ; bwd h_t]
  std::vector<Eigen::Index> argmax;  // per pooled column, the winning row
  Vector pooled;                     // before dropout
  Vector mask;                       // dropout multipliers (1 at inference)
  Vector features;                   // pooled * mask, the input of the heads
};

class TaggerModel {
 public:
  ModelConfig config;
  EmbeddingTable embedding;
  LstmCell forward_cell;
  LstmCell backward_cell;
  Parameter heads;  // labels x 2d, one head per row

  TaggerModel() = default;

  /// Random initialization. The embedding table is taken as given.
  static TaggerModel create(const ModelConfig& config, EmbeddingTable embedding) {
    if (embedding.dim() != config.embedding_dim) {
      throw DimensionError("embedding dimension " + std::to_string(embedding.dim()) +
                           " differs from configured " + std::to_string(config.embedding_dim));
    }
    if (config.hidden == 0 || config.labels == 0) throw ConfigError("model needs hidden > 0 and labels > 0");
    if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    TaggerModel m;
    m.config = config;
    m.embedding = std::move(embedding);
    std::mt19937_64 rng(config.seed);
    const auto in = static_cast<Eigen::Index>(config.embedding_dim);
    const auto d = static_cast<Eigen::Index>(config.hidden);
    m.forward_cell = LstmCell::random(in, d, "forward", rng);
    m.backward_cell = LstmCell::random(in, d, "backward", rng);
    Matrix h(static_cast<Eigen::Index>(config.labels), 2 * d);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = u(rng);
    m.heads = Parameter("heads", std::move(h));
    return m;
  }

  Eigen::Index hidden() const { return forward_cell.hidden(); }
  Eigen::Index label_count() const { return heads.value.rows(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&embedding.table};
    for (auto* p : forward_cell.parameters()) out.push_back(p);
    for (auto* p : backward_cell.parameters()) out.push_back(p);
    out.push_back(&heads);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

/// Encodes a document: bidirectional states H (T x 2d) and the max-pooled
/// vector over non-PAD positions. With a dropout RNG the pooled vector is
/// masked with inverted dropout at the configured rate.
inline EncodeTrace encode(const TaggerModel& model, const TokenIds& ids,
                          std::mt19937_64* dropout_rng = nullptr) {
  if (ids.empty()) throw InvalidInputError("encode: empty document");
  EncodeTrace tr;
  tr.ids = ids;
  const Matrix x = lookup(model.embedding, ids);
  const auto steps = static_cast<Eigen::Index>(ids.size());
  const Eigen::Index d = model.hidden();
  const RowVector zero = RowVector::Zero(d);
  tr.forward = lstm_forward(model.forward_cell, x, zero, zero);
  tr.backward = lstm_forward(model.backward_cell, x.colwise().reverse(), zero, zero);
  tr.states.resize(steps, 2 * d);
  tr.states.leftCols(d) = tr.forward.h;
  tr.states.rightCols(d) = tr.backward.h.colwise().reverse();

  tr.pooled = Vector::Constant(2 * d, -std::numeric_limits<double>::infinity());
  tr.argmax.assign(static_cast<std::size_t>(2 * d), -1);
  for (Eigen::Index t = 0; t < steps; ++t) {
    if (ids[static_cast<std::size_t>(t)] == kPadId) continue;
    for (Eigen::Index j = 0; j < 2 * d; ++j) {
      if (tr.states(t, j) > tr.pooled(j)) {
        tr.pooled(j) = tr.states(t, j);
        tr.argmax[static_cast<std::size_t>(j)] = t;
      }
    }
  }
  if (tr.argmax.front() < 0) throw InvalidInputError("encode: document holds only padding");

  tr.mask = Vector::Ones(2 * d);
  const double rate = model.config.dropout;
  if (dropout_rng && rate > 0.0) {
    std::bernoulli_distribution keep(1.0 - rate);
    for (Eigen::Index j = 0; j < 2 * d; ++j) tr.mask(j) = keep(*dropout_rng) ? 1.0 / (1.0 - rate) : 0.0;
  }
  tr.features = tr.pooled.cwiseProduct(tr.mask);
  return tr;
}

/// p_i = sigmoid(theta_i . c) for every head.
inline PredictionRecord predict(const TaggerModel& model, const Vector& pooled) {
  if (pooled.size() != model.heads.value.cols()) throw DimensionError("predict: pooled size mismatch");
  if (!all_finite(pooled)) throw InvalidInputError("predict: non-finite pooled vector");
  PredictionRecord r;
  r.pooled = pooled;
  r.logits = model.heads.value * pooled;
  r.probabilities = r.logits.unaryExpr([](double z) { return sigmoid(z); });
  r.decisions = decide(r.probabilities);
  r.confidences = confidence(r.probabilities);
  return r;
}

/// Inference (dropout off).
inline PredictionRecord predict_document(const TaggerModel& model, const TokenIds& ids) {
  return predict(model, encode(model, ids).features);
}

/// Backward pass for one document given dL/dlogits: accumulates into every
/// parameter's grad, including the touched embedding rows.
inline void backward_document(TaggerModel& model, const EncodeTrace& tr, const Vector& dlogits) {
  const Eigen::Index d = model.hidden();
  const auto steps = static_cast<Eigen::Index>(tr.ids.size());
  model.heads.grad.noalias() += dlogits * tr.features.transpose();
  const Vector dfeatures = model.heads.value.transpose() * dlogits;
  const Vector dpooled = dfeatures.cwiseProduct(tr.mask);

  Matrix dstates = Matrix::Zero(steps, 2 * d);
  for (Eigen::Index j = 0; j < 2 * d; ++j) dstates(tr.argmax[static_cast<std::size_t>(j)], j) += dpooled(j);

  const RowVector zero = RowVector::Zero(d);
  const LstmInputGrads gf = lstm_backward(model.forward_cell, tr.forward, dstates.leftCols(d), zero, zero);
  const Matrix dback = dstates.rightCols(d).colwise().reverse();
  const LstmInputGrads gb = lstm_backward(model.backward_cell, tr.backward, dback, zero, zero);
  const Matrix dx = gf.x + gb.x.colwise().reverse();
  lookup_backward(model.embedding, tr.ids, dx);
}

// ---------------------------------------------------------------------------
// Checkpoint: "NTCKPT01", u64 little-endian manifest length, JSON manifest,
// then each parameter as little-endian float32 in manifest order.

inline constexpr char kCheckpointMagic[8] = {'N', 'T', 'C', 'K', 'P', 'T', '0', '1'};

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t read_u64_le(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c == EOF) throw IoError("checkpoint truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace detail

/// Everything needed to run a trained tagger on raw text.
struct Checkpoint {
  TaggerModel model;
  Vocabulary vocabulary;
  Taxonomy taxonomy;
  AbbreviationTable abbreviations;
  nlohmann::json extra = nlohmann::json::object();
};

inline void save_checkpoint(const std::string& path, Checkpoint& ck) {
  nlohmann::json params = nlohmann::json::array();
  for (auto* p : ck.model.parameters()) {
    params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  const TaxonomyFiles tsv = taxonomy_to_tsv(ck.taxonomy);
  nlohmann::json abbrev = nlohmann::json::object();
  for (const auto& [k, v] : ck.abbreviations.entries()) abbrev[k] = v;
  const nlohmann::json manifest = {
      {"format", "notetag-checkpoint"},
      {"version", 1},
      {"dtype", "float32-le"},
      {"config", ck.model.config},
      {"vocabulary", ck.vocabulary.to_json()},
      {"taxonomy", {{"labels", tsv.labels}, {"grouping", tsv.grouping}, {"ontology", tsv.ontology}}},
      {"abbreviations", abbrev},
      {"parameters", params},
      {"extra", ck.extra}};
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto* p : ck.model.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(p->value.data()[i]));
      for (int b = 0; b < 4; ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xffu));
    }
  }
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw SchemaError("not a notetag checkpoint: " + path);
  }
  const std::uint64_t length = detail::read_u64_le(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw IoError("checkpoint manifest truncated");
  const auto manifest = nlohmann::json::parse(text);

  Checkpoint ck;
  ck.vocabulary = Vocabulary::from_json(manifest.at("vocabulary"));
  {
    std::istringstream l(manifest.at("taxonomy").at("labels").get<std::string>());
    std::istringstream g(manifest.at("taxonomy").at("grouping").get<std::string>());
    std::istringstream o(manifest.at("taxonomy").at("ontology").get<std::string>());
    ck.taxonomy = parse_taxonomy(l, g, o);
  }
  for (const auto& [k, v] : manifest.at("abbreviations").items()) {
    ck.abbreviations.add(k, v.get<TokenSequence>());
  }
  ck.extra = manifest.value("extra", nlohmann::json::object());
  const auto config = manifest.at("config").get<ModelConfig>();
  const auto in_dim = static_cast<Eigen::Index>(config.embedding_dim);
  ck.model.config = config;
  ck.model.embedding.table =
      Parameter("embedding", Matrix::Zero(static_cast<Eigen::Index>(ck.vocabulary.size()), in_dim));
  ck.model.forward_cell = LstmCell::zeros(in_dim, static_cast<Eigen::Index>(config.hidden), "forward");
  ck.model.backward_cell = LstmCell::zeros(in_dim, static_cast<Eigen::Index>(config.hidden), "backward");
  ck.model.heads = Parameter(
      "heads", Matrix::Zero(static_cast<Eigen::Index>(config.labels), 2 * static_cast<Eigen::Index>(config.hidden)));

  const auto& entries = manifest.at("parameters");
  const auto params = ck.model.parameters();
  if (entries.size() != params.size()) throw SchemaError("checkpoint parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const auto& e = entries[k];
    if (e.at("name").get<std::string>() != p.name || e.at("rows").get<Eigen::Index>() != p.value.rows() ||
        e.at("cols").get<Eigen::Index>() != p.value.cols()) {
      throw SchemaError("checkpoint parameter " + e.at("name").get<std::string>() + " has unexpected shape");
    }
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        const int c = in.get();
        if (c == EOF) throw IoError("checkpoint data truncated");
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(c)) << (8 * b);
      }
      p.value.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    p.zero_grad();
  }
  return ck;
}

}  // namespace notetag
