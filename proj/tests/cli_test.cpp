#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "notetag/cli.hpp"

namespace notetag {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "notetag");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int run_process(const std::string& args) {
  const std::string cmd = std::string(NOTETAG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("notetag_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

// Small corpus plus a one-epoch model shared by the verb tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch("pipeline");
    write_file(dir_ / "gen.json", R"({"documents": 120, "shifted_documents": 20, "background_vocab": 60})");
    write_file(dir_ / "train.json",
               R"({"model": {"embedding_dim": 8, "hidden": 4}, "train": {"max_epochs": 1, "batch_size": 16},
                   "split": {"train": 0.8, "validation": 0.1, "test": 0.1}})");
    const auto g = run({"generate", "--config", (dir_ / "gen.json").string(), "--seed", "5", "--out",
                        (dir_ / "corpus").string()});
    ASSERT_EQ(g.code, 0) << g.err;
    const auto t = run({"train", "--config", (dir_ / "train.json").string(), "--seed", "9", "--in",
                        (dir_ / "corpus" / "in_domain.jsonl").string(), "--taxonomy", (dir_ / "corpus").string(),
                        "--out", model().string()});
    ASSERT_EQ(t.code, 0) << t.err;
  }

  static fs::path model() { return dir_ / "model.ckpt"; }

  static fs::path dir_;
};

fs::path Pipeline::dir_;

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("generate"), std::string::npos);
  EXPECT_NE(r.out.find("serve"), std::string::npos);
  EXPECT_EQ(run({"train", "--help"}).code, 0);
}

TEST(Cli, UnknownVerbIsUsageErrorWithHelp) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Subcommands"), std::string::npos);
  EXPECT_EQ(run({}).code, 1);
}

TEST(Cli, MissingRequiredOptionIsUsageError) {
  const auto r = run({"tag", "--in", "x.jsonl"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--model"), std::string::npos);
  EXPECT_EQ(run({"train", "--mode", "bogus", "--in", "a", "--out", "b"}).code, 1);
}

TEST(Cli, DataErrorsExitTwo) {
  const fs::path dir = scratch("errors");
  EXPECT_EQ(run({"train", "--in", (dir / "missing.jsonl").string(), "--out", (dir / "m").string()}).code, 2);
  write_file(dir / "bad.json", "{not json");
  const auto r = run({"generate", "--config", (dir / "bad.json").string(), "--out", (dir / "c").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  write_file(dir / "zero.json", R"({"documents": 0})");
  EXPECT_EQ(run({"generate", "--config", (dir / "zero.json").string(), "--out", (dir / "c").string()}).code, 2);
  write_file(dir / "garbage.ckpt", "not a checkpoint");
  write_file(dir / "one.jsonl", R"({"id": "a", "text": "cat", "codes": []})" "\n");
  EXPECT_EQ(run({"tag", "--model", (dir / "garbage.ckpt").string(), "--in", (dir / "one.jsonl").string(), "--out",
                 (dir / "p.jsonl").string()})
                .code,
            2);
}

TEST(Cli, ProcessExitCodes) {
  EXPECT_EQ(run_process("--help"), 0);
  EXPECT_EQ(run_process("frobnicate"), 1);
  EXPECT_EQ(run_process("eval --model /nonexistent/model --in /nonexistent/x --out /tmp/notetag_cli_never"), 2);
}

TEST(Cli, GenerateIsDeterministicPerSeed) {
  const fs::path dir = scratch("generate");
  write_file(dir / "gen.json", R"({"documents": 30, "shifted_documents": 5})");
  for (const char* sub : {"a", "b", "c"}) {
    const std::string seed = std::string(sub) == "c" ? "2" : "1";
    ASSERT_EQ(run({"generate", "--config", (dir / "gen.json").string(), "--seed", seed, "--out",
                   (dir / sub).string()})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(dir / "a" / "in_domain.jsonl"), slurp(dir / "b" / "in_domain.jsonl"));
  EXPECT_NE(slurp(dir / "a" / "in_domain.jsonl"), slurp(dir / "c" / "in_domain.jsonl"));
  EXPECT_EQ(line_count(dir / "a" / "in_domain.jsonl"), 30u);
  EXPECT_EQ(line_count(dir / "a" / "shifted.jsonl"), 5u);
  const Taxonomy t = load_taxonomy((dir / "a" / "labels.tsv").string(), (dir / "a" / "grouping.tsv").string(),
                                   (dir / "a" / "ontology.tsv").string());
  EXPECT_EQ(t.labels.size(), 13u);
}

TEST_F(Pipeline, TrainWritesArtifacts) {
  for (const char* suffix : {"", ".history.csv", ".train.jsonl", ".val.jsonl", ".test.jsonl"}) {
    EXPECT_TRUE(fs::exists(model().string() + suffix)) << suffix;
  }
  EXPECT_EQ(line_count(model().string() + ".history.csv"), 2u);
  EXPECT_EQ(line_count(model().string() + ".train.jsonl"), 96u);
}

TEST_F(Pipeline, SameSeedGivesIdenticalHistory) {
  const fs::path again = dir_ / "again.ckpt";
  const auto t = run({"train", "--config", (dir_ / "train.json").string(), "--seed", "9", "--in",
                      (dir_ / "corpus" / "in_domain.jsonl").string(), "--taxonomy", (dir_ / "corpus").string(), "--out",
                      again.string()});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(slurp(again.string() + ".history.csv"), slurp(model().string() + ".history.csv"));
  EXPECT_EQ(slurp(again), slurp(model()));
}

TEST_F(Pipeline, TagWritesOneLinePerDocument) {
  const fs::path in = dir_ / "three.jsonl";
  write_file(in, R"({"id": "n1", "text": "the cat is vomiting", "codes": []}
{"id": "n2", "text": "lame left fore 3 days", "codes": ["NEOPLASIA"]}
{"id": "n3", "text": "routine check", "codes": []}
)");
  std::string outputs[2];
  for (int k = 0; k < 2; ++k) {
    const fs::path out = dir_ / ("tags" + std::to_string(k) + ".jsonl");
    const auto r = run({"tag", "--model", model().string(), "--in", in.string(), "--out", out.string(), "--seed", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    outputs[k] = slurp(out);
    ASSERT_EQ(line_count(out), 3u);
  }
  EXPECT_EQ(outputs[0], outputs[1]);
  std::istringstream lines(outputs[0]);
  std::string line;
  std::getline(lines, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("id"), "n1");
  EXPECT_EQ(j.at("probabilities").size(), 13u);
  const double priority = j.at("priority").get<double>();
  EXPECT_GE(priority, 0.0);
  EXPECT_LE(priority, 1.0);
  EXPECT_TRUE(j.at("codes").is_array());
}

TEST_F(Pipeline, EvalAbstainCalibrateWriteReports) {
  const std::string test = model().string() + ".test.jsonl";
  const auto e = run({"eval", "--model", model().string(), "--in", test, "--out", (dir_ / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(line_count(dir_ / "eval" / "labels.csv"), 14u);
  const auto agg = nlohmann::json::parse(slurp(dir_ / "eval" / "aggregate.json"));
  EXPECT_TRUE(agg.at("f1").contains("weighted"));
  EXPECT_TRUE(agg.contains("subtype_regression"));

  const auto a = run({"abstain", "--model", model().string(), "--in", (dir_ / "corpus" / "shifted.jsonl").string(),
                      "--train", model().string() + ".train.jsonl", "--out", (dir_ / "abstain").string(), "--seed",
                      "3", "--abstain-features", "probability", "--abstain-target", "loss"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(line_count(dir_ / "abstain" / "sweep_confidence.csv"), 11u);
  EXPECT_EQ(line_count(dir_ / "abstain" / "sweep_learned.csv"), 11u);

  const fs::path tags = dir_ / "learned_tags.jsonl";
  const auto t = run({"tag", "--model", model().string(), "--in", test, "--out", tags.string(), "--abstainer",
                      (dir_ / "abstain" / "abstainer.json").string()});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(line_count(tags), 12u);

  const auto c = run({"calibrate", "--model", model().string(), "--in", test, "--out", (dir_ / "cal.json").string(),
                      "--bins", "5"});
  ASSERT_EQ(c.code, 0) << c.err;
  const auto cal = nlohmann::json::parse(slurp(dir_ / "cal.json"));
  EXPECT_EQ(cal.at("bins").size(), 5u);
  EXPECT_EQ(cal.at("total").get<std::size_t>(), 12u * 13u);
}

}  // namespace
}  // namespace notetag
