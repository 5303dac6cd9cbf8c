#pragma once

// Label universe: label set with the spurious sentinel, meta-category
// grouping and the child -> parent ontology used to roll codes up.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "notetag/errors.hpp"

namespace notetag {

inline constexpr std::string_view kSpuriousCode = "SPURIOUS";

struct Label {
  int id = 0;
  std::string code;
  std::string name;
};

class LabelSet {
 public:
  LabelSet() = default;

  explicit LabelSet(std::vector<Label> labels) : labels_(std::move(labels)) {
    std::optional<int> spurious;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      labels_[i].id = static_cast<int>(i);
      if (!by_code_.emplace(labels_[i].code, static_cast<int>(i)).second) {
        throw ValidationError("duplicate label code: " + labels_[i].code);
      }
      if (labels_[i].code == kSpuriousCode) spurious = static_cast<int>(i);
    }
    if (!spurious) throw ValidationError("label set has no SPURIOUS label");
    spurious_id_ = *spurious;
  }

  std::size_t size() const { return labels_.size(); }
  int spurious_id() const { return spurious_id_; }
  const Label& operator[](std::size_t i) const { return labels_.at(i); }
  const std::vector<Label>& labels() const { return labels_; }

  std::optional<int> find(const std::string& code) const {
    auto it = by_code_.find(code);
    if (it == by_code_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> codes() const {
    std::vector<std::string> out;
    for (const auto& l : labels_) out.push_back(l.code);
    return out;
  }

 private:
  std::vector<Label> labels_;
  std::unordered_map<std::string, int> by_code_;
  int spurious_id_ = -1;
};

/// K clusters over the non-spurious labels; members[k] holds J(k) as label ids.
struct MetaGrouping {
  std::vector<std::string> names;
  std::vector<std::vector<int>> members;

  std::size_t size() const { return members.size(); }

  /// Cluster of each label, -1 for labels outside every cluster.
  std::vector<int> cluster_of(std::size_t label_count) const {
    std::vector<int> out(label_count, -1);
    for (std::size_t k = 0; k < members.size(); ++k) {
      for (int i : members[k]) out.at(static_cast<std::size_t>(i)) = static_cast<int>(k);
    }
    return out;
  }
};

/// Checks that the grouping partitions every non-spurious label exactly once.
inline void validate_partition(const MetaGrouping& grouping, const LabelSet& labels) {
  std::vector<int> seen(labels.size(), 0);
  for (std::size_t k = 0; k < grouping.members.size(); ++k) {
    if (grouping.members[k].empty()) {
      throw PartitionError("cluster " + std::to_string(k) + " is empty");
    }
    for (int i : grouping.members[k]) {
      if (i < 0 || static_cast<std::size_t>(i) >= labels.size()) {
        throw ValidationError("cluster member id " + std::to_string(i) + " out of range");
      }
      if (i == labels.spurious_id()) {
        throw PartitionError("the SPURIOUS label cannot belong to a cluster");
      }
      ++seen[static_cast<std::size_t>(i)];
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<int>(i) == labels.spurious_id()) continue;
    if (seen[i] != 1) {
      throw PartitionError("label " + labels[i].code + " belongs to " + std::to_string(seen[i]) +
                           " clusters");
    }
  }
}

class Ontology {
 public:
  Ontology() = default;
  Ontology(std::string root, std::map<std::string, std::string> parent)
      : root_(std::move(root)), parent_(std::move(parent)) {
    check_acyclic();
  }

  const std::string& root() const { return root_; }
  const std::map<std::string, std::string>& edges() const { return parent_; }
  bool contains(const std::string& code) const { return parent_.count(code) != 0 || code == root_; }

  /// The ancestor of `code` (possibly itself) that is a direct child of the
  /// root; nullopt for codes that never reach the root.
  std::optional<std::string> top_level(const std::string& code) const {
    std::string current = code;
    for (std::size_t steps = 0; steps <= parent_.size(); ++steps) {
      auto it = parent_.find(current);
      if (it == parent_.end()) return std::nullopt;
      if (it->second == root_) return current;
      current = it->second;
    }
    return std::nullopt;
  }

 private:
  void check_acyclic() const {
    // 0 = unvisited, 1 = on stack, 2 = done
    std::unordered_map<std::string, int> state;
    for (const auto& [start, _] : parent_) {
      std::vector<std::string> path;
      std::string current = start;
      while (true) {
        int& s = state[current];
        if (s == 2) break;
        if (s == 1) throw CycleError("ontology cycle through code " + current);
        s = 1;
        path.push_back(current);
        auto it = parent_.find(current);
        if (it == parent_.end()) break;
        current = it->second;
      }
      for (const auto& p : path) state[p] = 2;
    }
  }

  std::string root_;
  std::map<std::string, std::string> parent_;
};

struct Taxonomy {
  LabelSet labels;
  MetaGrouping grouping;
  Ontology ontology;
};

/// Total: codes that are labels map to themselves, known disease codes to
/// their top-level ancestor, anything else to SPURIOUS.
inline int roll_up(const std::string& code, const Ontology& onto, const LabelSet& labels) {
  if (auto direct = labels.find(code)) return *direct;
  if (auto top = onto.top_level(code)) {
    if (auto id = labels.find(*top); id && *id != labels.spurious_id()) return *id;
  }
  return labels.spurious_id();
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename Fn>
void for_each_tsv_row(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    fn(split_tabs(line), line_no);
  }
}

}  // namespace detail

inline LabelSet parse_labels(std::istream& in) {
  std::vector<Label> labels;
  detail::for_each_tsv_row(in, [&](const std::vector<std::string>& cols, std::size_t line_no) {
    if (cols.size() != 2 || cols[0].empty()) {
      throw ParseError("labels file rows are `code TAB name`", line_no);
    }
    labels.push_back(Label{0, cols[0], cols[1]});
  });
  return LabelSet(std::move(labels));
}

/// Rows: `cluster_index TAB code [TAB cluster name]`. Cluster indices may be
/// any integers; clusters are numbered densely in ascending index order.
inline MetaGrouping parse_grouping(std::istream& in, const LabelSet& labels) {
  std::map<long, std::vector<int>> by_index;
  std::map<long, std::string> names;
  detail::for_each_tsv_row(in, [&](const std::vector<std::string>& cols, std::size_t line_no) {
    if (cols.size() < 2 || cols.size() > 3) {
      throw ParseError("grouping rows are `cluster_index TAB code [TAB name]`", line_no);
    }
    long index = 0;
    try {
      std::size_t used = 0;
      index = std::stol(cols[0], &used);
      if (used != cols[0].size()) throw std::invalid_argument(cols[0]);
    } catch (const std::exception&) {
      throw ParseError("cluster index is not an integer: " + cols[0], line_no);
    }
    auto id = labels.find(cols[1]);
    if (!id) throw ValidationError("grouping references unknown code: " + cols[1]);
    by_index[index].push_back(*id);
    if (cols.size() == 3 && !cols[2].empty()) names[index] = cols[2];
  });
  MetaGrouping g;
  for (auto& [index, members] : by_index) {
    g.names.push_back(names.count(index) ? names[index] : "cluster " + std::to_string(index));
    g.members.push_back(std::move(members));
  }
  validate_partition(g, labels);
  return g;
}

/// First row `ROOT TAB code`, then `child TAB parent` rows.
inline Ontology parse_ontology(std::istream& in) {
  std::optional<std::string> root;
  std::map<std::string, std::string> parent;
  detail::for_each_tsv_row(in, [&](const std::vector<std::string>& cols, std::size_t line_no) {
    if (cols.size() != 2 || cols[0].empty() || cols[1].empty()) {
      throw ParseError("ontology rows are `child TAB parent`", line_no);
    }
    if (!root) {
      if (cols[0] != "ROOT") throw ParseError("first ontology row must be `ROOT TAB code`", line_no);
      root = cols[1];
      return;
    }
    if (!parent.emplace(cols[0], cols[1]).second) {
      throw ParseError("code " + cols[0] + " has two parents", line_no);
    }
  });
  if (!root) throw ParseError("ontology file has no ROOT row", 0);
  return Ontology(*root, std::move(parent));
}

inline Taxonomy parse_taxonomy(std::istream& labels_in, std::istream& grouping_in,
                               std::istream& ontology_in) {
  Taxonomy t;
  t.labels = parse_labels(labels_in);
  t.grouping = parse_grouping(grouping_in, t.labels);
  t.ontology = parse_ontology(ontology_in);
  return t;
}

inline Taxonomy load_taxonomy(const std::string& labels_path, const std::string& grouping_path,
                              const std::string& ontology_path) {
  auto open = [](const std::string& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open taxonomy file: " + p);
    return in;
  };
  auto l = open(labels_path);
  auto g = open(grouping_path);
  auto o = open(ontology_path);
  return parse_taxonomy(l, g, o);
}

/// For each label, the number of distinct raw codes (other than the label's
/// own code) that roll up to it.
inline std::vector<std::size_t> subtype_counts(const std::vector<std::vector<std::string>>& raw_codes,
                                               const Taxonomy& tax) {
  std::vector<std::set<std::string>> distinct(tax.labels.size());
  for (const auto& doc : raw_codes) {
    for (const auto& code : doc) {
      const int id = roll_up(code, tax.ontology, tax.labels);
      if (tax.labels[static_cast<std::size_t>(id)].code != code) {
        distinct[static_cast<std::size_t>(id)].insert(code);
      }
    }
  }
  std::vector<std::size_t> out;
  for (const auto& s : distinct) out.push_back(s.size());
  return out;
}

inline nlohmann::json taxonomy_to_json(const Taxonomy& tax) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : tax.labels.labels()) {
    labels.push_back({{"id", l.id}, {"code", l.code}, {"name", l.name}});
  }
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t k = 0; k < tax.grouping.size(); ++k) {
    nlohmann::json codes = nlohmann::json::array();
    for (int i : tax.grouping.members[k]) codes.push_back(tax.labels[static_cast<std::size_t>(i)].code);
    groups.push_back({{"index", k}, {"name", tax.grouping.names[k]}, {"codes", codes}});
  }
  return {{"labels", labels}, {"meta_groups", groups}, {"spurious", std::string(kSpuriousCode)}};
}

/// Serializes back to the three TSV formats accepted by parse_taxonomy.
struct TaxonomyFiles {
  std::string labels;
  std::string grouping;
  std::string ontology;
};

inline TaxonomyFiles taxonomy_to_tsv(const Taxonomy& tax) {
  TaxonomyFiles f;
  std::ostringstream l, g, o;
  for (const auto& label : tax.labels.labels()) l << label.code << '\t' << label.name << '\n';
  for (std::size_t k = 0; k < tax.grouping.size(); ++k) {
    for (int i : tax.grouping.members[k]) {
      g << (k + 1) << '\t' << tax.labels[static_cast<std::size_t>(i)].code << '\t'
        << tax.grouping.names[k] << '\n';
    }
  }
  o << "ROOT\t" << tax.ontology.root() << '\n';
  for (const auto& [child, parent] : tax.ontology.edges()) o << child << '\t' << parent << '\n';
  f.labels = l.str();
  f.grouping = g.str();
  f.ontology = o.str();
  return f;
}

}  // namespace notetag
