#pragma once

// Corpus I/O (JSONL), train/validation/test splitting and the synthetic
// corpus generator with a configurable domain shift.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "notetag/errors.hpp"
#include "notetag/taxonomy.hpp"
#include "notetag/text.hpp"

namespace notetag {

struct Document {
  std::string id;
  std::string text;
  std::vector<std::string> codes;
  std::vector<int> label_ids;  // sorted, unique, never empty
  TokenSequence tokens;
  TokenIds token_ids;
};

/// Rolls raw codes up to a sorted label-id set; {SPURIOUS} when nothing is left.
inline std::vector<int> roll_up_codes(const std::vector<std::string>& codes, const Taxonomy& tax) {
  std::set<int> ids;
  for (const auto& c : codes) ids.insert(roll_up(c, tax.ontology, tax.labels));
  if (ids.empty()) ids.insert(tax.labels.spurious_id());
  return {ids.begin(), ids.end()};
}

inline void assign_token_ids(std::vector<Document>& docs, const Vocabulary& vocab,
                             std::size_t max_tokens = kDefaultMaxTokens) {
  for (auto& d : docs) d.token_ids = vocab.encode(d.tokens, max_tokens);
}

inline Document make_document(std::string id, std::string text, std::vector<std::string> codes,
                              const Taxonomy& tax, const AbbreviationTable& abbrev,
                              std::size_t max_tokens = kDefaultMaxTokens) {
  Document d;
  d.id = std::move(id);
  d.text = std::move(text);
  d.codes = std::move(codes);
  d.label_ids = roll_up_codes(d.codes, tax);
  d.tokens = tokenize(d.text, abbrev);
  if (d.tokens.size() > max_tokens) d.tokens.resize(max_tokens);
  return d;
}

/// One JSON object per line: {"id": string, "text": string, "codes": [string]}.
inline std::vector<Document> read_corpus(std::istream& in, const Taxonomy& tax,
                                         const AbbreviationTable& abbrev = {},
                                         const Vocabulary* vocab = nullptr,
                                         std::size_t max_tokens = kDefaultMaxTokens) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    auto field = [&](const char* name) -> const nlohmann::json& {
      if (!j.is_object() || !j.contains(name)) {
        throw SchemaError("line " + std::to_string(line_no) + ": missing field '" + name + "'");
      }
      return j.at(name);
    };
    const auto& id = field("id");
    const auto& text = field("text");
    const auto& codes = field("codes");
    if (!id.is_string() || !text.is_string() || !codes.is_array() ||
        !std::all_of(codes.begin(), codes.end(), [](const auto& c) { return c.is_string(); })) {
      throw SchemaError("line " + std::to_string(line_no) +
                        ": expected string id, string text and an array of string codes");
    }
    docs.push_back(make_document(id.get<std::string>(), text.get<std::string>(),
                                 codes.get<std::vector<std::string>>(), tax, abbrev, max_tokens));
    if (vocab) docs.back().token_ids = vocab->encode(docs.back().tokens, max_tokens);
  }
  return docs;
}

inline std::vector<Document> read_corpus(const std::string& path, const Taxonomy& tax,
                                         const AbbreviationTable& abbrev = {},
                                         const Vocabulary* vocab = nullptr,
                                         std::size_t max_tokens = kDefaultMaxTokens) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  return read_corpus(in, tax, abbrev, vocab, max_tokens);
}

inline void write_corpus(std::ostream& out, const std::vector<Document>& docs) {
  for (const auto& d : docs) {
    out << nlohmann::json{{"id", d.id}, {"text", d.text}, {"codes", d.codes}}.dump() << '\n';
  }
}

inline void write_corpus(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file: " + path);
  write_corpus(out, docs);
}

struct SplitRatios {
  double train = 0.9;
  double validation = 0.05;
  double test = 0.05;
};

struct CorpusSplit {
  std::vector<Document> train;
  std::vector<Document> validation;
  std::vector<Document> test;
};

/// Seeded shuffle, then floor-sized validation and test parts; the remainder
/// goes to train.
inline CorpusSplit split(std::vector<Document> docs, SplitRatios ratios, std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9 ||
      ratios.train < 0 || ratios.validation < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  if (docs.size() < 3) throw ConfigError("split needs at least 3 documents");
  std::mt19937_64 rng(seed);
  std::shuffle(docs.begin(), docs.end(), rng);
  const auto n = static_cast<double>(docs.size());
  // The small slack keeps products such as 0.05 * 100 from flooring to 4.
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.validation * n + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n + 1e-9));
  const std::size_t n_train = docs.size() - n_val - n_test;
  CorpusSplit s;
  auto it = std::make_move_iterator(docs.begin());
  s.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(it + static_cast<std::ptrdiff_t>(n_train),
                      it + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_val),
                std::make_move_iterator(docs.end()));
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticSpec {
  std::size_t label_count = 12;
  std::size_t cluster_count = 4;
  std::size_t documents = 5000;
  std::size_t shifted_documents = 1000;
  std::size_t keywords_per_label = 6;      // keyword vocabulary of each subtype
  std::size_t cluster_keywords = 4;        // shared by every label in a cluster
  std::size_t background_vocab = 600;
  double mean_length = 40.0;
  double shifted_mean_length = 24.0;
  double mean_labels = 2.0;
  std::size_t keywords_per_mention = 3;
  std::size_t shifted_keywords_per_mention = 2;
  double cooccurrence_boost = 2.0;
  double shift_oov_fraction = 0.154;
  double skew = 0.5;
  double spurious_rate = 0.2;
  std::size_t min_subtypes = 1;
  std::size_t max_subtypes = 1;
  std::uint64_t seed = 7;

  void validate() const {
    if (cluster_count < 1 || label_count < cluster_count) {
      throw ConfigError("synthetic spec needs label_count >= cluster_count >= 1");
    }
    if (!(shift_oov_fraction >= 0.0 && shift_oov_fraction <= 1.0)) {
      throw ConfigError("shift_oov_fraction must lie in [0, 1]");
    }
    if (documents < 1 || keywords_per_label < 1 || background_vocab < 1 ||
        keywords_per_mention < 1 || shifted_keywords_per_mention < 1) {
      throw ConfigError("synthetic spec counts must be positive");
    }
    if (!(mean_length > 0.0) || !(shifted_mean_length > 0.0) || !(mean_labels >= 1.0)) {
      throw ConfigError("synthetic spec needs positive lengths and mean_labels >= 1");
    }
    if (!(cooccurrence_boost >= 0.0) || !(skew >= 0.0) ||
        !(spurious_rate >= 0.0 && spurious_rate <= 1.0)) {
      throw ConfigError("synthetic spec boost/skew must be >= 0 and spurious_rate in [0, 1]");
    }
    if (min_subtypes < 1 || max_subtypes < min_subtypes) {
      throw ConfigError("synthetic spec needs 1 <= min_subtypes <= max_subtypes");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SyntheticSpec, label_count, cluster_count, documents,
                                                shifted_documents, keywords_per_label,
                                                cluster_keywords, background_vocab, mean_length,
                                                shifted_mean_length, mean_labels,
                                                keywords_per_mention, shifted_keywords_per_mention,
                                                cooccurrence_boost, shift_oov_fraction, skew,
                                                spurious_rate, min_subtypes, max_subtypes, seed)

struct SyntheticCorpus {
  std::vector<Document> in_domain;
  std::vector<Document> shifted;
  Taxonomy taxonomy;
  std::vector<std::size_t> subtypes;  // per disease label
};

namespace detail {

// Pronounceable lowercase pseudo-word for an index; distinct indices give
// distinct words for a fixed prefix.
inline std::string pseudo_word(std::string_view prefix, std::size_t index) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::string w(prefix);
  do {
    const std::size_t syl = index % (kConsonants.size() * kVowels.size());
    w.push_back(kConsonants[syl / kVowels.size()]);
    w.push_back(kVowels[syl % kVowels.size()]);
    index /= kConsonants.size() * kVowels.size();
  } while (index > 0);
  return w;
}

inline std::string label_code(std::size_t i) {
  std::string s = std::to_string(i);
  return "L" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

inline std::string shift_synonym(const std::string& word) { return "x" + word; }

class SyntheticWriter {
 public:
  SyntheticWriter(const SyntheticSpec& spec, const Taxonomy& tax,
                  const std::vector<std::vector<std::vector<std::string>>>& subtype_keywords,
                  const std::vector<std::vector<std::string>>& cluster_keywords,
                  const std::vector<std::string>& spurious_keywords,
                  const std::vector<std::size_t>& cluster_of)
      : spec_(spec),
        tax_(tax),
        subtype_keywords_(subtype_keywords),
        cluster_keywords_(cluster_keywords),
        spurious_keywords_(spurious_keywords),
        cluster_of_(cluster_of) {
    for (std::size_t i = 0; i < spec.label_count; ++i) {
      label_weight_.push_back(std::pow(static_cast<double>(i + 1), -spec.skew));
    }
    std::vector<double> bg;
    for (std::size_t w = 0; w < spec.background_vocab; ++w) {
      bg.push_back(1.0 / static_cast<double>(w + 1));
      background_.push_back(pseudo_word("", w));
    }
    background_dist_ = std::discrete_distribution<std::size_t>(bg.begin(), bg.end());
  }

  Document make(const std::string& id, std::mt19937_64& rng, bool shifted) {
    // Label count: 1 + Poisson(mean - 1), capped at the label count.
    std::size_t n_labels = 1;
    if (spec_.mean_labels > 1.0) {
      std::poisson_distribution<std::size_t> extra(spec_.mean_labels - 1.0);
      n_labels += extra(rng);
    }
    n_labels = std::min(n_labels, spec_.label_count);

    std::vector<std::size_t> chosen;
    std::vector<bool> taken(spec_.label_count, false);
    std::vector<bool> hot_cluster(spec_.cluster_count, false);
    for (std::size_t n = 0; n < n_labels; ++n) {
      std::vector<double> w(spec_.label_count, 0.0);
      for (std::size_t i = 0; i < spec_.label_count; ++i) {
        if (taken[i]) continue;
        w[i] = label_weight_[i] * (hot_cluster[cluster_of_[i]] ? 1.0 + spec_.cooccurrence_boost : 1.0);
      }
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      const std::size_t i = pick(rng);
      taken[i] = true;
      hot_cluster[cluster_of_[i]] = true;
      chosen.push_back(i);
    }
    std::sort(chosen.begin(), chosen.end());

    const std::size_t per_mention =
        shifted ? spec_.shifted_keywords_per_mention : spec_.keywords_per_mention;
    std::vector<std::string> codes;
    std::vector<std::string> keywords;
    for (std::size_t i : chosen) {
      std::uniform_int_distribution<std::size_t> sub(0, subtype_keywords_[i].size() - 1);
      const std::size_t s = sub(rng);
      codes.push_back(label_code(i) + ".S" + std::to_string(s));
      const auto& pool = subtype_keywords_[i][s];
      std::uniform_int_distribution<std::size_t> kw(0, pool.size() - 1);
      for (std::size_t r = 0; r < per_mention; ++r) keywords.push_back(pool[kw(rng)]);
      const auto& shared = cluster_keywords_[cluster_of_[i]];
      if (!shared.empty()) {
        std::uniform_int_distribution<std::size_t> ck(0, shared.size() - 1);
        keywords.push_back(shared[ck(rng)]);
      }
    }
    std::bernoulli_distribution spurious(spec_.spurious_rate);
    if (spurious(rng)) {
      std::uniform_int_distribution<std::size_t> kw(0, spurious_keywords_.size() - 1);
      codes.push_back("NONDISEASE.F" + std::to_string(kw(rng)));
      for (std::size_t r = 0; r < per_mention; ++r) keywords.push_back(spurious_keywords_[kw(rng)]);
    }

    const double mean = shifted ? spec_.shifted_mean_length : spec_.mean_length;
    std::gamma_distribution<double> length_dist(4.0, mean / 4.0);
    const auto length = std::max<std::size_t>(keywords.size() + 2,
                                              static_cast<std::size_t>(std::lround(length_dist(rng))));
    std::vector<std::string> words;
    words.reserve(length);
    for (std::size_t t = keywords.size(); t < length; ++t) words.push_back(background_[background_dist_(rng)]);
    for (auto& k : keywords) {
      std::uniform_int_distribution<std::size_t> pos(0, words.size());
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos(rng)), k);
    }
    if (shifted && spec_.shift_oov_fraction > 0.0) {
      std::bernoulli_distribution replace(spec_.shift_oov_fraction);
      for (auto& w : words) {
        if (replace(rng)) w = shift_synonym(w);
      }
    }
    std::string text;
    for (std::size_t t = 0; t < words.size(); ++t) {
      if (t) text.push_back(' ');
      text += words[t];
    }
    return make_document(id, std::move(text), std::move(codes), tax_, AbbreviationTable{});
  }

 private:
  const SyntheticSpec& spec_;
  const Taxonomy& tax_;
  const std::vector<std::vector<std::vector<std::string>>>& subtype_keywords_;
  const std::vector<std::vector<std::string>>& cluster_keywords_;
  const std::vector<std::string>& spurious_keywords_;
  const std::vector<std::size_t>& cluster_of_;
  std::vector<double> label_weight_;
  std::vector<std::string> background_;
  std::discrete_distribution<std::size_t> background_dist_;
};

}  // namespace detail

/// Pure function of the spec. Labels L00..L{m'-1} are assigned round-robin to
/// K' clusters; each label has between min_subtypes and max_subtypes subtype
/// codes (spread evenly over the labels), each with its own keywords.
inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticCorpus out;

  std::vector<Label> labels;
  std::map<std::string, std::string> parent;
  const std::string root = "DISEASE";
  std::vector<std::size_t> cluster_of(spec.label_count);
  for (std::size_t i = 0; i < spec.label_count; ++i) {
    labels.push_back(Label{0, detail::label_code(i), "synthetic disease " + std::to_string(i)});
    parent[detail::label_code(i)] = root;
    cluster_of[i] = i % spec.cluster_count;
  }
  labels.push_back(Label{0, std::string(kSpuriousCode), "spurious"});
  out.taxonomy.labels = LabelSet(std::move(labels));
  for (std::size_t k = 0; k < spec.cluster_count; ++k) {
    out.taxonomy.grouping.names.push_back("synthetic cluster " + std::to_string(k));
    out.taxonomy.grouping.members.emplace_back();
  }
  for (std::size_t i = 0; i < spec.label_count; ++i) {
    out.taxonomy.grouping.members[cluster_of[i]].push_back(static_cast<int>(i));
  }

  // Subtype counts interpolate min..max across labels in a seed-shuffled order,
  // so diversity is not tied to label frequency rank.
  std::mt19937_64 layout_rng(spec.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(spec.label_count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), layout_rng);
  out.subtypes.assign(spec.label_count, spec.min_subtypes);
  for (std::size_t r = 0; r < spec.label_count; ++r) {
    const double frac = spec.label_count > 1 ? static_cast<double>(r) / (spec.label_count - 1) : 0.0;
    out.subtypes[order[r]] =
        spec.min_subtypes +
        static_cast<std::size_t>(std::lround(frac * static_cast<double>(spec.max_subtypes - spec.min_subtypes)));
  }

  std::size_t next_keyword = 0;
  std::vector<std::vector<std::vector<std::string>>> subtype_keywords(spec.label_count);
  for (std::size_t i = 0; i < spec.label_count; ++i) {
    for (std::size_t s = 0; s < out.subtypes[i]; ++s) {
      std::vector<std::string> kws;
      for (std::size_t k = 0; k < spec.keywords_per_label; ++k) {
        kws.push_back(detail::pseudo_word("q", next_keyword++));
      }
      subtype_keywords[i].push_back(std::move(kws));
      parent[detail::label_code(i) + ".S" + std::to_string(s)] = detail::label_code(i);
    }
  }
  std::vector<std::vector<std::string>> cluster_keywords(spec.cluster_count);
  for (auto& ck : cluster_keywords) {
    for (std::size_t k = 0; k < spec.cluster_keywords; ++k) ck.push_back(detail::pseudo_word("q", next_keyword++));
  }
  std::vector<std::string> spurious_keywords;
  for (std::size_t k = 0; k < spec.keywords_per_label; ++k) {
    spurious_keywords.push_back(detail::pseudo_word("q", next_keyword++));
  }
  out.taxonomy.ontology = Ontology(root, std::move(parent));

  detail::SyntheticWriter writer(spec, out.taxonomy, subtype_keywords, cluster_keywords,
                                 spurious_keywords, cluster_of);
  std::mt19937_64 rng(spec.seed);
  for (std::size_t n = 0; n < spec.documents; ++n) {
    out.in_domain.push_back(writer.make("syn-" + std::to_string(n), rng, false));
  }
  std::mt19937_64 shift_rng(spec.seed + 0x9e3779b97f4a7c15ULL);
  for (std::size_t n = 0; n < spec.shifted_documents; ++n) {
    out.shifted.push_back(writer.make("shift-" + std::to_string(n), shift_rng, true));
  }
  return out;
}

}  // namespace notetag
