#pragma once

// Command-line front end: generate / train / tag / eval / abstain / calibrate
// / serve. Exit codes: 0 success, 1 usage error, 2 data or config error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "notetag/abstention.hpp"
#include "notetag/corpus.hpp"
#include "notetag/default_taxonomy.hpp"
#include "notetag/evaluation.hpp"
#include "notetag/model.hpp"
#include "notetag/review_http.hpp"
#include "notetag/review_service.hpp"
#include "notetag/taxonomy.hpp"
#include "notetag/training.hpp"

namespace notetag {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace cli {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string model;
  std::string in;
  std::string out;
  std::string mode;
  std::string abstain_features = "confidence";
  std::string abstain_target = "accuracy";
  std::string taxonomy_dir;
  std::string embeddings;
  std::string abbreviations;
  std::string train_corpus;
  std::string abstainer;
  std::string log = "review_events.jsonl";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t bins = 10;
};

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

inline Taxonomy resolve_taxonomy(const std::string& dir) {
  if (dir.empty()) return default_taxonomy();
  const fs::path d(dir);
  return load_taxonomy((d / "labels.tsv").string(), (d / "grouping.tsv").string(), (d / "ontology.tsv").string());
}

inline void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

inline int generate(const Options& o, std::ostream& out) {
  require(o.out, "--out");
  SyntheticSpec spec;
  if (!o.config.empty()) spec = read_json_file(o.config).get<SyntheticSpec>();
  if (o.seed) spec.seed = *o.seed;
  const SyntheticCorpus corpus = generate_synthetic(spec);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_corpus((dir / "in_domain.jsonl").string(), corpus.in_domain);
  write_corpus((dir / "shifted.jsonl").string(), corpus.shifted);
  const TaxonomyFiles tsv = taxonomy_to_tsv(corpus.taxonomy);
  write_text(dir / "labels.tsv", tsv.labels);
  write_text(dir / "grouping.tsv", tsv.grouping);
  write_text(dir / "ontology.tsv", tsv.ontology);
  out << "wrote " << corpus.in_domain.size() << " in-domain and " << corpus.shifted.size()
      << " shifted documents to " << dir.string() << '\n';
  return kExitOk;
}

struct TrainFile {
  ModelConfig model;
  TrainConfig train;
  SplitRatios split;
};

inline TrainFile read_train_file(const std::string& path) {
  TrainFile f;
  f.model.hidden = 64;
  if (path.empty()) return f;
  const auto j = read_json_file(path);
  if (j.contains("model")) f.model = j.at("model").get<ModelConfig>();
  if (j.contains("train")) f.train = j.at("train").get<TrainConfig>();
  if (j.contains("split")) {
    const auto& s = j.at("split");
    f.split = {s.value("train", 0.9), s.value("validation", 0.05), s.value("test", 0.05)};
  }
  return f;
}

inline int train(const Options& o, std::ostream& out) {
  require(o.in, "--in");
  require(o.out, "--out");
  TrainFile cfg = read_train_file(o.config);
  if (o.seed) {
    cfg.model.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (!o.mode.empty()) {
    const ObjectiveMode mode = parse_objective_mode(o.mode);
    if (cfg.train.objective.mode != mode) {
      cfg.train.objective = mode == ObjectiveMode::kCluster ? ObjectiveConfig::cluster()
                            : mode == ObjectiveMode::kMeta  ? ObjectiveConfig::meta()
                                                            : ObjectiveConfig::baseline();
    }
  }
  cfg.train.validate();

  Checkpoint ck;
  ck.taxonomy = resolve_taxonomy(o.taxonomy_dir);
  if (!o.abbreviations.empty()) ck.abbreviations = AbbreviationTable::load(o.abbreviations);
  auto docs = read_corpus(o.in, ck.taxonomy, ck.abbreviations, nullptr, cfg.model.max_tokens);
  CorpusSplit parts = split(std::move(docs), cfg.split, cfg.train.seed);
  ck.vocabulary = index_splits(parts, cfg.model.max_tokens);

  std::optional<std::string> emb_path;
  if (!o.embeddings.empty()) emb_path = o.embeddings;
  EmbeddingTable emb = load_embeddings(emb_path, ck.vocabulary, cfg.model.seed, cfg.model.embedding_dim);
  cfg.model.embedding_dim = emb.dim();
  cfg.model.labels = ck.taxonomy.labels.size();
  ck.model = TaggerModel::create(cfg.model, std::move(emb));

  const TrainHistory history = notetag::train(ck.model, parts.train, parts.validation, ck.taxonomy, cfg.train);

  std::vector<std::size_t> support(ck.taxonomy.labels.size(), 0);
  for (const auto& d : parts.train) {
    for (int id : d.label_ids) ++support[static_cast<std::size_t>(id)];
  }
  ck.extra = {{"train_support", support}, {"train_config", cfg.train}, {"chosen_epoch", history.chosen_epoch}};
  save_checkpoint(o.out, ck);
  history.write_csv(o.out + ".history.csv");
  write_corpus(o.out + ".train.jsonl", parts.train);
  write_corpus(o.out + ".val.jsonl", parts.validation);
  write_corpus(o.out + ".test.jsonl", parts.test);

  const AggregateMetrics test = evaluate_model(ck.model, parts.test);
  out << "trained " << history.epochs.size() << " epochs, chose epoch " << history.chosen_epoch
      << "; test weighted F1 " << test.f1_weighted << ", EM " << test.exact_match << '\n';
  return kExitOk;
}

inline std::vector<Document> read_for_model(const std::string& path, const Checkpoint& ck) {
  return read_corpus(path, ck.taxonomy, ck.abbreviations, &ck.vocabulary, ck.model.config.max_tokens);
}

inline int tag(const Options& o, std::ostream& out) {
  require(o.model, "--model");
  require(o.in, "--in");
  require(o.out, "--out");
  const Checkpoint ck = load_checkpoint(o.model);
  const auto docs = read_for_model(o.in, ck);
  const auto preds = predict_corpus(ck.model, docs);
  std::vector<double> priority = confidence_priorities(preds);
  if (!o.abstainer.empty()) {
    const AbstentionModel a = abstainer_from_json(read_json_file(o.abstainer));
    priority = learned_priority(a, abstention_features(preds, a.feature_kind), a.feature_kind);
  }
  std::ofstream file(o.out);
  if (!file) throw IoError("cannot write predictions: " + o.out);
  for (std::size_t n = 0; n < docs.size(); ++n) {
    std::vector<std::string> codes;
    for (std::size_t i = 0; i < preds[n].decisions.size(); ++i) {
      if (preds[n].decisions[i]) codes.push_back(ck.taxonomy.labels[i].code);
    }
    const auto& p = preds[n].probabilities;
    file << nlohmann::json{{"id", docs[n].id},
                           {"codes", codes},
                           {"probabilities", std::vector<double>(p.data(), p.data() + p.size())},
                           {"priority", priority[n]},
                           {"text", docs[n].text}}
                .dump()
         << '\n';
  }
  out << "tagged " << docs.size() << " documents\n";
  return kExitOk;
}

inline std::vector<std::size_t> train_support(const Checkpoint& ck) {
  if (ck.extra.contains("train_support")) return ck.extra.at("train_support").get<std::vector<std::size_t>>();
  return std::vector<std::size_t>(ck.taxonomy.labels.size(), 0);
}

inline int eval(const Options& o, std::ostream& out) {
  require(o.model, "--model");
  require(o.in, "--in");
  require(o.out, "--out");
  const Checkpoint ck = load_checkpoint(o.model);
  const auto docs = read_for_model(o.in, ck);
  const auto preds = predict_corpus(ck.model, docs);
  const auto decisions = decision_matrix(preds);
  const auto gold = gold_sets(docs);
  std::vector<std::vector<std::string>> raw;
  for (const auto& d : docs) raw.push_back(d.codes);
  const auto subtypes = subtype_counts(raw, ck.taxonomy);
  const auto metrics = per_label_metrics(decisions, gold, ck.taxonomy.labels.size(), subtypes);
  const AggregateMetrics agg = aggregate(metrics, decisions, gold);
  const auto support = train_support(ck);

  const fs::path dir(o.out);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "labels.csv");
    write_label_report(f, ck.taxonomy.labels, metrics, support);
  }
  {
    std::ofstream f(dir / "scatter.csv");
    write_scatter(f, ck.taxonomy.labels, metrics, support);
  }
  nlohmann::json report = aggregate_to_json(agg);
  std::vector<double> f1, n, sub;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (static_cast<int>(i) == ck.taxonomy.labels.spurious_id()) continue;
    f1.push_back(metrics[i].f1);
    n.push_back(static_cast<double>(support[i]));
    sub.push_back(static_cast<double>(subtypes[i]));
  }
  try {
    const RegressionResult r = subtype_regression(f1, n, sub);
    report["subtype_regression"] = {{"terms", {"intercept", "log_n", "subtypes"}},
                                    {"coefficients", r.coefficients},
                                    {"t_statistics", r.t_statistics},
                                    {"p_values", r.p_values},
                                    {"observations", r.observations}};
  } catch (const SingularityError& e) {
    report["subtype_regression"] = {{"error", e.what()}};
  }
  write_text(dir / "aggregate.json", report.dump(2) + "\n");
  out << "weighted F1 " << agg.f1_weighted << ", unweighted F1 " << agg.f1_unweighted << ", EM "
      << agg.exact_match << '\n';
  return kExitOk;
}

inline int abstain(const Options& o, std::ostream& out) {
  require(o.model, "--model");
  require(o.in, "--in");
  require(o.train_corpus, "--train");
  require(o.out, "--out");
  const FeatureKind fk = parse_feature_kind(o.abstain_features);
  const TargetKind tk = parse_target_kind(o.abstain_target);
  const Checkpoint ck = load_checkpoint(o.model);
  const auto train_docs = read_for_model(o.train_corpus, ck);
  const auto test_docs = read_for_model(o.in, ck);
  const auto train_preds = predict_corpus(ck.model, train_docs);
  const auto test_preds = predict_corpus(ck.model, test_docs);

  AbstainerConfig acfg;
  if (!o.config.empty()) acfg = read_json_file(o.config).get<AbstainerConfig>();
  if (o.seed) acfg.seed = *o.seed;
  const AbstentionTargets targets = abstention_targets(train_preds, gold_sets(train_docs));
  const auto& t = tk == TargetKind::kAccuracy ? targets.accuracy : targets.loss;
  const Vector tv = Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
  AbstentionModel model = train_abstainer(abstention_features(train_preds, fk), tv, fk, tk, acfg);

  const auto decisions = decision_matrix(test_preds);
  const auto gold = gold_sets(test_docs);
  const std::size_t m = ck.taxonomy.labels.size();
  const SweepCurve baseline = sweep(confidence_priorities(test_preds), decisions, gold, m, "confidence");
  const SweepCurve learned =
      sweep(learned_priority(model, abstention_features(test_preds, fk), fk), decisions, gold, m,
            "learned-" + to_string(fk) + "-" + to_string(tk));

  const fs::path dir(o.out);
  fs::create_directories(dir);
  baseline.write_csv((dir / "sweep_confidence.csv").string());
  learned.write_csv((dir / "sweep_learned.csv").string());
  write_text(dir / "abstainer.json", abstainer_to_json(model).dump() + "\n");
  out << "f=0.5 weighted F1: confidence " << baseline.f1_weighted[5] << ", learned " << learned.f1_weighted[5]
      << '\n';
  return kExitOk;
}

inline int calibrate(const Options& o, std::ostream& out) {
  require(o.model, "--model");
  require(o.in, "--in");
  require(o.out, "--out");
  const Checkpoint ck = load_checkpoint(o.model);
  const auto docs = read_for_model(o.in, ck);
  std::vector<Vector> probs;
  for (const auto& p : predict_corpus(ck.model, docs)) probs.push_back(p.probabilities);
  const CalibrationReport r = calibration_report(probs, gold_sets(docs), o.bins);
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"mean_predicted", b.mean_predicted},
                    {"positive_frequency", b.positive_frequency},
                    {"count", b.count}});
  }
  write_text(o.out, nlohmann::json{{"ece", r.expected_calibration_error}, {"total", r.total}, {"bins", bins}}.dump(2) +
                        "\n");
  out << "ECE " << r.expected_calibration_error << " over " << r.total << " predictions\n";
  return kExitOk;
}

inline int serve(const Options& o, std::ostream& out) {
  Taxonomy tax = o.model.empty() ? resolve_taxonomy(o.taxonomy_dir) : load_checkpoint(o.model).taxonomy;
  ReviewQueue queue(std::move(tax), o.log);
  httplib::Server server;
  install_review_routes(server, queue);
  out << "serving review queue on http://" << o.host << ':' << o.port << " (log " << o.log << ")\n" << std::flush;
  if (!server.listen(o.host, o.port)) throw IoError("cannot listen on " + o.host + ":" + std::to_string(o.port));
  return kExitOk;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"notetag: multi-label tagging of clinical notes with abstention"};
  app.require_subcommand(1);
  cli::Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration file");
    sub->add_option("--seed", o.seed, "Random seed");
  };

  auto* gen = app.add_subcommand("generate", "Write a synthetic corpus and its taxonomy");
  common(gen);
  gen->add_option("--out", o.out, "Output directory");

  auto* tr = app.add_subcommand("train", "Train a tagger and write a checkpoint");
  common(tr);
  tr->add_option("--in", o.in, "Corpus JSONL");
  tr->add_option("--out", o.out, "Checkpoint path");
  tr->add_option("--mode", o.mode, "Objective mode")->check(CLI::IsMember({"baseline", "cluster", "meta"}));
  tr->add_option("--taxonomy", o.taxonomy_dir, "Directory with labels.tsv, grouping.tsv, ontology.tsv");
  tr->add_option("--embeddings", o.embeddings, "Word-vector text file");
  tr->add_option("--abbreviations", o.abbreviations, "Abbreviation TSV");

  auto* tg = app.add_subcommand("tag", "Write JSONL predictions with abstention priorities");
  common(tg);
  tg->add_option("--model", o.model, "Checkpoint");
  tg->add_option("--in", o.in, "Corpus JSONL");
  tg->add_option("--out", o.out, "Predictions JSONL");
  tg->add_option("--abstainer", o.abstainer, "Learned abstainer JSON (default: confidence priority)");

  auto* ev = app.add_subcommand("eval", "Per-label and aggregate metrics");
  common(ev);
  ev->add_option("--model", o.model, "Checkpoint");
  ev->add_option("--in", o.in, "Corpus JSONL");
  ev->add_option("--out", o.out, "Report directory");

  auto* ab = app.add_subcommand("abstain", "Train an abstainer and write sweep curves");
  common(ab);
  ab->add_option("--model", o.model, "Checkpoint");
  ab->add_option("--in", o.in, "Evaluation corpus JSONL");
  ab->add_option("--train", o.train_corpus, "Corpus the abstainer is fitted on");
  ab->add_option("--out", o.out, "Output directory");
  ab->add_option("--abstain-features", o.abstain_features, "Abstainer input")
      ->check(CLI::IsMember({"confidence", "probability", "logit", "pooled"}));
  ab->add_option("--abstain-target", o.abstain_target, "Abstainer target")
      ->check(CLI::IsMember({"accuracy", "loss"}));

  auto* cal = app.add_subcommand("calibrate", "Reliability bins and expected calibration error");
  common(cal);
  cal->add_option("--model", o.model, "Checkpoint");
  cal->add_option("--in", o.in, "Corpus JSONL");
  cal->add_option("--out", o.out, "Report JSON");
  cal->add_option("--bins", o.bins, "Number of bins");

  auto* sv = app.add_subcommand("serve", "Run the review service");
  common(sv);
  sv->add_option("--model", o.model, "Checkpoint whose taxonomy is served");
  sv->add_option("--taxonomy", o.taxonomy_dir, "Taxonomy directory (default: built-in)");
  sv->add_option("--log", o.log, "Event log path");
  sv->add_option("--host", o.host, "Bind address");
  sv->add_option("--port", o.port, "Port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*gen) return cli::generate(o, out);
    if (*tr) return cli::train(o, out);
    if (*tg) return cli::tag(o, out);
    if (*ev) return cli::eval(o, out);
    if (*ab) return cli::abstain(o, out);
    if (*cal) return cli::calibrate(o, out);
    if (*sv) return cli::serve(o, out);
  } catch (const CLI::RequiredError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace notetag
