#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "notetag/corpus.hpp"
#include "notetag/default_taxonomy.hpp"

namespace notetag {
namespace {

std::vector<Document> numbered_docs(std::size_t n, const Taxonomy& tax) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n; ++i) {
    docs.push_back(make_document("d" + std::to_string(i), "text", {}, tax, {}));
  }
  return docs;
}

TEST(ReadCorpus, ParsesFixture) {
  const Taxonomy tax = default_taxonomy();
  std::istringstream in(
      "{\"id\":\"a\",\"text\":\"Vomiting x 2 days\",\"codes\":[\"VOMITING\",\"NOT_A_CODE\"]}\n"
      "\n"
      "{\"id\":\"b\",\"text\":\"healthy\",\"codes\":[]}\n");
  const auto docs = read_corpus(in, tax);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].id, "a");
  EXPECT_EQ(docs[0].tokens, (TokenSequence{"vomiting", "x", "NUM", "days"}));
  const int vomiting = *tax.labels.find("VOMITING");
  const std::vector<int> expected_a = {std::min(vomiting, tax.labels.spurious_id()),
                                       std::max(vomiting, tax.labels.spurious_id())};
  EXPECT_EQ(docs[0].label_ids, expected_a);
  EXPECT_EQ(docs[1].label_ids, (std::vector<int>{tax.labels.spurious_id()}));
}

TEST(ReadCorpus, RollsUpSubtypes) {
  const Taxonomy tax = default_taxonomy();
  std::istringstream in("{\"id\":\"a\",\"text\":\"t\",\"codes\":[\"ENZOOTIC_DISEASE\"]}\n");
  const auto docs = read_corpus(in, tax);
  EXPECT_EQ(docs[0].label_ids, (std::vector<int>{*tax.labels.find("INFECTIOUS_DISEASE")}));
}

TEST(ReadCorpus, MalformedJsonReportsLine) {
  const Taxonomy tax = default_taxonomy();
  std::istringstream in("{\"id\":\"a\",\"text\":\"t\",\"codes\":[]}\n{oops\n");
  try {
    read_corpus(in, tax);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ReadCorpus, MissingOrMistypedFieldsAreSchemaErrors) {
  const Taxonomy tax = default_taxonomy();
  std::istringstream missing("{\"id\":\"a\",\"codes\":[]}\n");
  EXPECT_THROW(read_corpus(missing, tax), SchemaError);
  std::istringstream typed("{\"id\":1,\"text\":\"t\",\"codes\":[]}\n");
  EXPECT_THROW(read_corpus(typed, tax), SchemaError);
  std::istringstream codes("{\"id\":\"a\",\"text\":\"t\",\"codes\":[3]}\n");
  EXPECT_THROW(read_corpus(codes, tax), SchemaError);
}

TEST(ReadCorpus, MissingFileIsIoError) {
  EXPECT_THROW(read_corpus("/nonexistent/corpus.jsonl", default_taxonomy()), IoError);
}

TEST(ReadCorpus, TruncatesTokens) {
  const Taxonomy tax = default_taxonomy();
  std::istringstream in("{\"id\":\"a\",\"text\":\"a b c d e\",\"codes\":[]}\n");
  const auto docs = read_corpus(in, tax, {}, nullptr, 3);
  EXPECT_EQ(docs[0].tokens.size(), 3u);
}

TEST(WriteCorpus, RoundTrips) {
  const Taxonomy tax = default_taxonomy();
  std::istringstream in(
      "{\"codes\":[\"VOMITING\"],\"id\":\"a\",\"text\":\"x \\\"y\\\"\"}\n{\"codes\":[],\"id\":\"b\",\"text\":\"\"}\n");
  const auto docs = read_corpus(in, tax);
  std::ostringstream out;
  write_corpus(out, docs);
  std::istringstream back(out.str());
  const auto again = read_corpus(back, tax);
  ASSERT_EQ(again.size(), docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    EXPECT_EQ(again[i].id, docs[i].id);
    EXPECT_EQ(again[i].text, docs[i].text);
    EXPECT_EQ(again[i].codes, docs[i].codes);
  }
}

TEST(Split, HundredDocuments) {
  const auto s = split(numbered_docs(100, default_taxonomy()), {}, 1);
  EXPECT_EQ(s.train.size(), 90u);
  EXPECT_EQ(s.validation.size(), 5u);
  EXPECT_EQ(s.test.size(), 5u);
}

TEST(Split, RemainderGoesToTrain) {
  const auto s = split(numbered_docs(101, default_taxonomy()), {}, 1);
  EXPECT_EQ(s.train.size(), 91u);
  EXPECT_EQ(s.validation.size(), 5u);
  EXPECT_EQ(s.test.size(), 5u);
}

TEST(Split, PartitionAndDeterminism) {
  const Taxonomy tax = default_taxonomy();
  for (std::size_t n : {3u, 17u, 250u}) {
    const auto a = split(numbered_docs(n, tax), {}, 9);
    const auto b = split(numbered_docs(n, tax), {}, 9);
    std::multiset<std::string> ids;
    for (const auto* part : {&a.train, &a.validation, &a.test}) {
      for (const auto& d : *part) ids.insert(d.id);
    }
    EXPECT_EQ(ids.size(), n);
    EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), n);
    ASSERT_EQ(a.test.size(), b.test.size());
    for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].id, b.test[i].id);
  }
}

TEST(Split, RejectsBadInput) {
  const Taxonomy tax = default_taxonomy();
  EXPECT_THROW(split(numbered_docs(2, tax), {}, 1), ConfigError);
  EXPECT_THROW(split(numbered_docs(10, tax), {0.5, 0.2, 0.2}, 1), ConfigError);
}

TEST(Synthetic, Deterministic) {
  SyntheticSpec spec;
  spec.documents = 200;
  spec.shifted_documents = 50;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  ASSERT_EQ(a.in_domain.size(), 200u);
  ASSERT_EQ(a.shifted.size(), 50u);
  for (std::size_t i = 0; i < a.in_domain.size(); ++i) {
    EXPECT_EQ(a.in_domain[i].text, b.in_domain[i].text);
    EXPECT_EQ(a.in_domain[i].codes, b.in_domain[i].codes);
  }
  spec.seed = 8;
  EXPECT_NE(generate_synthetic(spec).in_domain[0].text + generate_synthetic(spec).in_domain[1].text,
            a.in_domain[0].text + a.in_domain[1].text);
}

TEST(Synthetic, TaxonomyShape) {
  const auto c = generate_synthetic(SyntheticSpec{});
  EXPECT_EQ(c.taxonomy.labels.size(), 13u);
  EXPECT_EQ(c.taxonomy.grouping.size(), 4u);
  EXPECT_NO_THROW(validate_partition(c.taxonomy.grouping, c.taxonomy.labels));
}

TEST(Synthetic, ZeroShiftKeepsVocabulary) {
  SyntheticSpec spec;
  spec.documents = 1000;
  spec.shifted_documents = 300;
  spec.shift_oov_fraction = 0.0;
  const auto c = generate_synthetic(spec);
  std::set<std::string> vocab;
  for (const auto& d : c.in_domain) vocab.insert(d.tokens.begin(), d.tokens.end());
  for (const auto& d : c.shifted) {
    for (const auto& t : d.tokens) EXPECT_TRUE(vocab.count(t)) << t;
  }
}

TEST(Synthetic, ShiftOovFractionIsMeasured) {
  SyntheticSpec spec;
  spec.shifted_documents = 2500;  // about 60k tokens
  const auto c = generate_synthetic(spec);
  std::set<std::string> vocab;
  for (const auto& d : c.in_domain) vocab.insert(d.tokens.begin(), d.tokens.end());
  std::size_t total = 0, oov = 0;
  for (const auto& d : c.shifted) {
    total += d.tokens.size();
    for (const auto& t : d.tokens) oov += vocab.count(t) ? 0 : 1;
  }
  ASSERT_GE(total, 50000u);
  EXPECT_NEAR(static_cast<double>(oov) / static_cast<double>(total), 0.154, 0.02);
}

TEST(Synthetic, MeanLabelCountNearTarget) {
  SyntheticSpec spec;
  spec.spurious_rate = 0.0;
  spec.mean_labels = 2.0;
  const auto c = generate_synthetic(spec);
  double sum = 0;
  for (const auto& d : c.in_domain) sum += static_cast<double>(d.label_ids.size());
  EXPECT_NEAR(sum / static_cast<double>(c.in_domain.size()), 2.0, 0.1);
}

// Frequency of a label pair co-occurring, relative to independence.
double cooccurrence_lift(const SyntheticCorpus& c, bool same_cluster) {
  const std::size_t m = c.taxonomy.labels.size() - 1;
  const auto cluster = c.taxonomy.grouping.cluster_of(c.taxonomy.labels.size());
  std::vector<double> single(m, 0.0);
  std::map<std::pair<int, int>, double> pair;
  for (const auto& d : c.in_domain) {
    for (int a : d.label_ids) {
      if (static_cast<std::size_t>(a) >= m) continue;
      single[static_cast<std::size_t>(a)] += 1;
      for (int b : d.label_ids) {
        if (b > a && static_cast<std::size_t>(b) < m) pair[{a, b}] += 1;
      }
    }
  }
  const double n = static_cast<double>(c.in_domain.size());
  double observed = 0, expected = 0;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      if ((cluster[a] == cluster[b]) != same_cluster) continue;
      observed += pair[{static_cast<int>(a), static_cast<int>(b)}];
      expected += single[a] * single[b] / n;
    }
  }
  return observed / expected;
}

TEST(Synthetic, ClusterBoostRaisesWithinClusterCooccurrence) {
  SyntheticSpec boosted;
  boosted.cooccurrence_boost = 4.0;
  const auto b = generate_synthetic(boosted);
  EXPECT_GT(cooccurrence_lift(b, true), 1.3 * cooccurrence_lift(b, false));

  SyntheticSpec flat;
  flat.cooccurrence_boost = 0.0;
  const auto f = generate_synthetic(flat);
  EXPECT_NEAR(cooccurrence_lift(f, true) / cooccurrence_lift(f, false), 1.0, 0.15);
}

TEST(Synthetic, SkewMakesEarlierLabelsMoreFrequent) {
  SyntheticSpec spec;
  spec.skew = 1.0;
  const auto c = generate_synthetic(spec);
  std::vector<double> count(12, 0);
  for (const auto& d : c.in_domain) {
    for (int id : d.label_ids) {
      if (id < 12) count[static_cast<std::size_t>(id)] += 1;
    }
  }
  EXPECT_GT(count[0], count[5]);
  EXPECT_GT(count[5], count[11]);
}

TEST(Synthetic, SubtypeCountsFollowSpec) {
  SyntheticSpec spec;
  spec.min_subtypes = 1;
  spec.max_subtypes = 6;
  spec.documents = 3000;
  const auto c = generate_synthetic(spec);
  EXPECT_EQ(*std::min_element(c.subtypes.begin(), c.subtypes.end()), 1u);
  EXPECT_EQ(*std::max_element(c.subtypes.begin(), c.subtypes.end()), 6u);
  std::vector<std::vector<std::string>> raw;
  for (const auto& d : c.in_domain) raw.push_back(d.codes);
  const auto observed = subtype_counts(raw, c.taxonomy);
  for (std::size_t i = 0; i < c.subtypes.size(); ++i) EXPECT_LE(observed[i], c.subtypes[i]);
}

TEST(Synthetic, RejectsInvalidSpec) {
  SyntheticSpec spec;
  spec.cluster_count = 13;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
  spec = SyntheticSpec{};
  spec.shift_oov_fraction = 1.5;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
  spec = SyntheticSpec{};
  spec.max_subtypes = 0;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

TEST(Synthetic, JsonOverridesKeepDefaults) {
  const auto spec = nlohmann::json::parse(R"({"documents": 10, "seed": 3})").get<SyntheticSpec>();
  EXPECT_EQ(spec.documents, 10u);
  EXPECT_EQ(spec.seed, 3u);
  EXPECT_EQ(spec.label_count, 12u);
}

}  // namespace
}  // namespace notetag
