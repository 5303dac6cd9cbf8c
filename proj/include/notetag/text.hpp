#pragma once

// Tokenization, abbreviation expansion, vocabulary and word embeddings.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "notetag/errors.hpp"
#include "notetag/numerics.hpp"

namespace notetag {

inline constexpr std::string_view kNumToken = "NUM";
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::size_t kDefaultMaxTokens = 1000;

using TokenSequence = std::vector<std::string>;
using TokenIds = std::vector<int>;

namespace detail {

inline bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Splits on anything that is not an ASCII letter/digit (UTF-8 continuation
// bytes count as letters) and breaks digit runs out of mixed words.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  bool in_digits = false;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (!is_word_byte(c)) {
      flush();
      continue;
    }
    const bool digit = std::isdigit(c) != 0;
    if (!current.empty() && digit != in_digits) flush();
    in_digits = digit;
    current.push_back(static_cast<char>(c));
  }
  flush();
  return words;
}

}  // namespace detail

/// Abbreviation → expansion map. Keys are lowercase single tokens.
class AbbreviationTable {
 public:
  AbbreviationTable() = default;

  void add(std::string_view abbreviation, const TokenSequence& expansion) {
    std::string key = detail::lowercase(abbreviation);
    if (expansion.empty()) {
      throw ValidationError("abbreviation '" + key + "' has an empty expansion");
    }
    if (expansion.size() == 1 && detail::lowercase(expansion.front()) == key) {
      throw ValidationError("abbreviation '" + key + "' maps to itself");
    }
    TokenSequence normalized;
    for (const auto& e : expansion) normalized.push_back(detail::lowercase(e));
    entries_[std::move(key)] = std::move(normalized);
  }

  const TokenSequence* find(const std::string& lowered) const {
    auto it = entries_.find(lowered);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, TokenSequence>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  /// TSV: abbreviation TAB expansion (the expansion may contain spaces).
  static AbbreviationTable parse(std::istream& in) {
    AbbreviationTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw ParseError("abbreviation line needs two tab-separated columns", line_no);
      }
      TokenSequence expansion;
      std::istringstream words(line.substr(tab + 1));
      for (std::string w; words >> w;) expansion.push_back(w);
      try {
        table.add(line.substr(0, tab), expansion);
      } catch (const ValidationError& e) {
        throw ParseError(e.what(), line_no);
      }
    }
    return table;
  }

  static AbbreviationTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open abbreviation file: " + path);
    return parse(in);
  }

 private:
  std::map<std::string, TokenSequence> entries_;
};

/// Lowercases, turns punctuation into separators, replaces digit runs with
/// NUM and expands abbreviations once (expansions are not re-expanded).
inline TokenSequence tokenize(std::string_view text, const AbbreviationTable& abbrev = {}) {
  TokenSequence tokens;
  for (auto& word : detail::split_words(text)) {
    if (word == kNumToken || std::isdigit(static_cast<unsigned char>(word.front()))) {
      tokens.emplace_back(kNumToken);
      continue;
    }
    std::string lowered = detail::lowercase(word);
    if (const TokenSequence* expansion = abbrev.find(lowered)) {
      tokens.insert(tokens.end(), expansion->begin(), expansion->end());
    } else {
      tokens.push_back(std::move(lowered));
    }
  }
  return tokens;
}

class Vocabulary {
 public:
  Vocabulary() : id_to_token_{std::string(kPadToken), std::string(kUnkToken)} {
    index_rebuild();
  }

  /// Frequency-descending, then lexicographic. Reserved ids come first.
  static Vocabulary build(const std::vector<TokenSequence>& corpus, std::size_t min_freq = 1) {
    if (min_freq < 1) throw ConfigError("build_vocab: min_freq must be >= 1");
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& doc : corpus) {
      for (const auto& tok : doc) ++counts[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> entries;
    for (auto& [tok, n] : counts) {
      if (n >= min_freq && tok != kPadToken && tok != kUnkToken) entries.emplace_back(tok, n);
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    v.min_freq_ = min_freq;
    for (auto& e : entries) v.id_to_token_.push_back(std::move(e.first));
    v.index_rebuild();
    return v;
  }

  std::size_t size() const { return id_to_token_.size(); }
  std::size_t min_freq() const { return min_freq_; }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
      throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  TokenIds encode(const TokenSequence& tokens, std::size_t max_tokens = kDefaultMaxTokens) const {
    TokenIds ids;
    const std::size_t n = std::min(tokens.size(), max_tokens);
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(id(tokens[i]));
    return ids;
  }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  nlohmann::json to_json() const {
    return {{"min_freq", min_freq_}, {"tokens", id_to_token_}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    v.min_freq_ = j.at("min_freq").get<std::size_t>();
    v.id_to_token_ = j.at("tokens").get<std::vector<std::string>>();
    if (v.id_to_token_.size() < 2 || v.id_to_token_[0] != kPadToken ||
        v.id_to_token_[1] != kUnkToken) {
      throw SchemaError("vocabulary must start with the reserved tokens");
    }
    v.index_rebuild();
    if (v.token_to_id_.size() != v.id_to_token_.size()) {
      throw SchemaError("vocabulary contains duplicate tokens");
    }
    return v;
  }

 private:
  void index_rebuild() {
    token_to_id_.clear();
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
      token_to_id_.emplace(id_to_token_[i], static_cast<int>(i));
    }
  }

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  std::size_t min_freq_ = 1;
};

inline Vocabulary build_vocab(const std::vector<TokenSequence>& corpus, std::size_t min_freq) {
  return Vocabulary::build(corpus, min_freq);
}

/// |V| x D trainable table.
struct EmbeddingTable {
  Parameter table;

  std::size_t vocab_size() const { return static_cast<std::size_t>(table.value.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(table.value.cols()); }
};

struct WordVectors {
  std::vector<std::string> tokens;
  Matrix vectors;
};

/// Textual word-vector format: token followed by D numbers per line.
inline WordVectors read_word_vectors(std::istream& in) {
  WordVectors wv;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> values;
    for (std::string f; fields >> f;) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(f, &used));
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        throw ParseError("not a number: '" + f + "'", line_no);
      }
    }
    if (dim == 0) dim = values.size();
    if (values.empty() || values.size() != dim) {
      throw ParseError("expected " + std::to_string(dim + 1) + " fields, found " +
                           std::to_string(values.size() + 1),
                       line_no);
    }
    wv.tokens.push_back(std::move(token));
    rows.push_back(std::move(values));
  }
  wv.vectors = Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      wv.vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return wv;
}

/// Builds the embedding table. Tokens found in the vector file take the file
/// rows; every other row is drawn from N(0, s_j^2) with s_j the per-dimension
/// standard deviation of the file vectors (0.1 without a file).
inline EmbeddingTable load_embeddings(const std::optional<std::string>& path,
                                      const Vocabulary& vocab, std::uint64_t seed,
                                      std::size_t default_dim = 100) {
  WordVectors wv;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open word-vector file: " + *path);
    wv = read_word_vectors(in);
  }
  const bool have_file = wv.vectors.rows() > 0;
  const Eigen::Index dim = have_file ? wv.vectors.cols() : static_cast<Eigen::Index>(default_dim);

  Vector stddev = Vector::Constant(dim, 0.1);
  if (have_file && wv.vectors.rows() > 1) {
    const RowVector mean = wv.vectors.colwise().mean();
    const Matrix centered = wv.vectors.rowwise() - mean;
    stddev = (centered.colwise().squaredNorm() / static_cast<double>(wv.vectors.rows() - 1))
                 .cwiseSqrt()
                 .transpose();
  }

  std::unordered_map<std::string, Eigen::Index> file_rows;
  for (std::size_t i = 0; i < wv.tokens.size(); ++i) {
    file_rows.emplace(wv.tokens[i], static_cast<Eigen::Index>(i));
  }

  Matrix table(static_cast<Eigen::Index>(vocab.size()), dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    const auto r = static_cast<Eigen::Index>(id);
    // Draw for every row so OOV rows do not depend on which tokens matched.
    for (Eigen::Index c = 0; c < dim; ++c) table(r, c) = normal(rng) * stddev(c);
    auto it = file_rows.find(vocab.token(static_cast<int>(id)));
    if (it != file_rows.end()) table.row(r) = wv.vectors.row(it->second);
  }
  return EmbeddingTable{Parameter("embedding", std::move(table))};
}

/// Row t of the result is the embedding of ids[t].
inline Matrix lookup(const EmbeddingTable& table, const TokenIds& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.table.value.cols());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= table.vocab_size()) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(table.vocab_size()));
    }
    out.row(static_cast<Eigen::Index>(t)) = table.table.value.row(id);
  }
  return out;
}

/// Accumulates the gradient of a lookup back into the table rows.
inline void lookup_backward(EmbeddingTable& table, const TokenIds& ids, const Matrix& upstream) {
  if (upstream.rows() != static_cast<Eigen::Index>(ids.size()) ||
      upstream.cols() != table.table.value.cols()) {
    throw DimensionError("lookup_backward: upstream gradient shape mismatch");
  }
  for (std::size_t t = 0; t < ids.size(); ++t) {
    table.table.grad.row(ids[t]) += upstream.row(static_cast<Eigen::Index>(t));
  }
}

}  // namespace notetag
