#pragma once

// Human review queue for abstained documents. State lives in an append-only
// JSONL event log; replaying the log rebuilds the queue exactly.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "notetag/abstention.hpp"
#include "notetag/errors.hpp"
#include "notetag/taxonomy.hpp"

namespace notetag {

/// Validation failure that names the offending codes.
class InvalidCodesError : public ValidationError {
 public:
  explicit InvalidCodesError(std::vector<std::string> codes)
      : ValidationError("unknown label codes: " + join(codes)), codes_(std::move(codes)) {}

  const std::vector<std::string>& codes() const noexcept { return codes_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& c : v) s += (s.empty() ? "" : ", ") + c;
    return s;
  }
  std::vector<std::string> codes_;
};

enum class ReviewStatus { kPending, kAdjudicated };

struct Adjudication {
  std::vector<std::string> codes;
  std::string coder;
  std::string timestamp;
};

struct ReviewItem {
  std::string id;
  std::string text;
  std::vector<std::string> predicted_codes;
  std::vector<double> probabilities;  // label order of the taxonomy
  std::vector<double> confidences;
  double priority = 0.0;
  ReviewStatus status = ReviewStatus::kPending;
  std::optional<Adjudication> adjudication;
};

inline nlohmann::json review_item_to_json(const ReviewItem& item, const LabelSet& labels) {
  nlohmann::json predictions = nlohmann::json::array();
  for (std::size_t i = 0; i < item.probabilities.size() && i < labels.size(); ++i) {
    predictions.push_back({{"code", labels[i].code},
                           {"probability", item.probabilities[i]},
                           {"confidence", item.confidences[i]}});
  }
  nlohmann::json j = {{"id", item.id},
                      {"text", item.text},
                      {"codes", item.predicted_codes},
                      {"predictions", predictions},
                      {"priority", item.priority},
                      {"status", item.status == ReviewStatus::kPending ? "pending" : "adjudicated"},
                      {"adjudication", nullptr}};
  if (item.adjudication) {
    j["adjudication"] = {{"codes", item.adjudication->codes},
                         {"coder", item.adjudication->coder},
                         {"timestamp", item.adjudication->timestamp}};
  }
  return j;
}

/// UTC time as YYYY-MM-DDTHH:MM:SSZ.
inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// One line of a `tag` predictions file.
struct PredictionLine {
  std::string id;
  std::string text;
  std::vector<std::string> codes;
  std::vector<double> probabilities;
  double priority = 0.0;
};

inline std::vector<PredictionLine> read_predictions(std::istream& in) {
  std::vector<PredictionLine> out;
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
    try {
      PredictionLine p;
      p.id = j.at("id").get<std::string>();
      p.text = j.value("text", std::string());
      p.codes = j.at("codes").get<std::vector<std::string>>();
      p.probabilities = j.at("probabilities").get<std::vector<double>>();
      p.priority = j.at("priority").get<double>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<PredictionLine> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions file: " + path);
  return read_predictions(in);
}

class ReviewQueue {
 public:
  using Clock = std::function<std::string()>;

  /// With an empty `log_path` the queue is memory-only. Otherwise the log is
  /// replayed (if present) and every later event is appended to it.
  explicit ReviewQueue(Taxonomy taxonomy, std::string log_path = {}, Clock clock = utc_timestamp)
      : taxonomy_(std::move(taxonomy)), log_path_(std::move(log_path)), clock_(std::move(clock)) {
    if (!log_path_.empty()) {
      std::ifstream in(log_path_);
      if (in) replay(in);
    }
  }

  const Taxonomy& taxonomy() const { return taxonomy_; }

  std::size_t enqueue_abstained(const std::string& predictions_path, double fraction) {
    return enqueue_abstained(read_predictions(predictions_path), fraction);
  }

  /// Enqueues the floor(f * N) highest-priority documents not already known.
  std::size_t enqueue_abstained(const std::vector<PredictionLine>& lines, double fraction) {
    const std::size_t drop = dropped_count(fraction, lines.size());
    std::vector<double> priorities;
    for (const auto& l : lines) priorities.push_back(l.priority);
    const auto order = drop_order(priorities);
    for (std::size_t r = 0; r < drop; ++r) {
      const auto& l = lines[order[r]];
      if (l.probabilities.size() != taxonomy_.labels.size()) {
        throw SchemaError("prediction " + l.id + " has " + std::to_string(l.probabilities.size()) +
                          " probabilities, taxonomy has " + std::to_string(taxonomy_.labels.size()) + " labels");
      }
    }
    std::unique_lock lock(mutex_);
    std::size_t added = 0;
    for (std::size_t r = 0; r < drop; ++r) {
      const auto& l = lines[order[r]];
      if (items_.count(l.id)) continue;
      nlohmann::json event = {{"type", "enqueue"},
                              {"id", l.id},
                              {"text", l.text},
                              {"codes", l.codes},
                              {"probabilities", l.probabilities},
                              {"priority", l.priority}};
      commit(std::move(event));
      ++added;
    }
    return added;
  }

  /// Pending items ordered by priority descending, id ascending.
  std::vector<ReviewItem> list_pending(std::size_t limit, std::size_t offset = 0) const {
    std::shared_lock lock(mutex_);
    std::vector<const ReviewItem*> pending;
    for (const auto& [id, item] : items_) {
      if (item.status == ReviewStatus::kPending) pending.push_back(&item);
    }
    std::sort(pending.begin(), pending.end(), [](const ReviewItem* a, const ReviewItem* b) {
      if (a->priority != b->priority) return a->priority > b->priority;
      return a->id < b->id;
    });
    std::vector<ReviewItem> page;
    for (std::size_t i = offset; i < pending.size() && page.size() < limit; ++i) page.push_back(*pending[i]);
    return page;
  }

  std::size_t pending_count() const {
    std::shared_lock lock(mutex_);
    return static_cast<std::size_t>(std::count_if(items_.begin(), items_.end(), [](const auto& kv) {
      return kv.second.status == ReviewStatus::kPending;
    }));
  }

  ReviewItem get(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = items_.find(id);
    if (it == items_.end()) throw NotFoundError("unknown document id: " + id);
    return it->second;
  }

  ReviewItem submit_adjudication(const std::string& id, const std::vector<std::string>& codes,
                                 const std::string& coder) {
    std::unique_lock lock(mutex_);
    auto it = items_.find(id);
    if (it == items_.end()) throw NotFoundError("unknown document id: " + id);
    if (codes.empty()) throw ValidationError("adjudication needs at least one code");
    std::vector<std::string> invalid;
    for (const auto& c : codes) {
      if (!taxonomy_.labels.find(c)) invalid.push_back(c);
    }
    if (!invalid.empty()) throw InvalidCodesError(std::move(invalid));
    if (it->second.status == ReviewStatus::kAdjudicated) throw ConflictError("document already adjudicated: " + id);
    commit({{"type", "adjudicate"}, {"id", id}, {"codes", codes}, {"coder", coder}, {"timestamp", clock_()}});
    return items_.at(id);
  }

  /// Adjudicated items as corpus JSONL, ordered by id.
  std::size_t export_adjudicated(std::ostream& out) const {
    std::shared_lock lock(mutex_);
    std::size_t n = 0;
    for (const auto& [id, item] : items_) {
      if (item.status != ReviewStatus::kAdjudicated) continue;
      out << nlohmann::json{{"id", id}, {"text", item.text}, {"codes", item.adjudication->codes}}.dump() << '\n';
      ++n;
    }
    return n;
  }

  std::size_t export_adjudicated(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write export: " + path);
    const std::size_t n = export_adjudicated(out);
    out.flush();
    if (!out) throw IoError("failed writing export: " + path);
    return n;
  }

  std::size_t event_count() const {
    std::shared_lock lock(mutex_);
    return sequence_;
  }

  /// Full state, for replay comparisons.
  nlohmann::json state_json() const {
    std::shared_lock lock(mutex_);
    nlohmann::json items = nlohmann::json::array();
    for (const auto& [id, item] : items_) items.push_back(review_item_to_json(item, taxonomy_.labels));
    return {{"sequence", sequence_}, {"items", items}};
  }

 private:
  void replay(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json event;
      try {
        event = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("event log: ") + e.what(), line_no);
      }
      const auto seq = event.at("seq").get<std::size_t>();
      if (seq != sequence_ + 1) throw ParseError("event log sequence gap", line_no);
      apply(event);
    }
  }

  void commit(nlohmann::json event) {
    event["seq"] = sequence_ + 1;
    if (!log_path_.empty()) {
      std::ofstream out(log_path_, std::ios::app);
      out << event.dump() << '\n';
      out.flush();
      if (!out) throw IoError("cannot append to event log: " + log_path_);
    }
    apply(event);
  }

  void apply(const nlohmann::json& event) {
    const auto type = event.at("type").get<std::string>();
    const auto id = event.at("id").get<std::string>();
    if (type == "enqueue") {
      ReviewItem item;
      item.id = id;
      item.text = event.at("text").get<std::string>();
      item.predicted_codes = event.at("codes").get<std::vector<std::string>>();
      item.probabilities = event.at("probabilities").get<std::vector<double>>();
      for (double p : item.probabilities) item.confidences.push_back(p > 0.5 ? p : 1.0 - p);
      item.priority = event.at("priority").get<double>();
      items_[id] = std::move(item);
    } else if (type == "adjudicate") {
      auto& item = items_.at(id);
      item.status = ReviewStatus::kAdjudicated;
      item.adjudication = Adjudication{event.at("codes").get<std::vector<std::string>>(),
                                       event.at("coder").get<std::string>(),
                                       event.at("timestamp").get<std::string>()};
    } else {
      throw SchemaError("unknown event type: " + type);
    }
    sequence_ = event.at("seq").get<std::size_t>();
  }

  Taxonomy taxonomy_;
  std::string log_path_;
  Clock clock_;
  std::map<std::string, ReviewItem> items_;
  std::size_t sequence_ = 0;
  mutable std::shared_mutex mutex_;
};

}  // namespace notetag
