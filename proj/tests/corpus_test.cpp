// Copyright 2026 The MILab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "milab/corpus.hpp"

#include <fstream>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace milab::corpus {
namespace {

TEST(Tokenize, SplitsOnNonAlnumAndLowercases) {
  auto toks = tokenize_text("Hello, World!  x2\t(done)");
  EXPECT_EQ(toks, (std::vector<Token>{"hello", "world", "x2", "done"}));
}

TEST(Tokenize, Utf8BytesActAsSeparators) {
  auto toks = tokenize_text("caf\xC3\xA9 bar");
  EXPECT_EQ(toks, (std::vector<Token>{"caf", "bar"}));
}

TEST(Tokenize, RecognizesDummyTokenLiterally) {
  auto toks = tokenize_text("a <unk> b<unk>c");
  EXPECT_EQ(toks, (std::vector<Token>{"a", "<unk>", "b", "<unk>", "c"}));
}

TEST(TokenizeDocument, RecordsSentenceBreaks) {
  Document doc;
  tokenize_document("first part. second part\nthird", doc);
  EXPECT_EQ(doc.tokens.size(), 5u);
  EXPECT_EQ(doc.sentence_breaks, (std::vector<std::size_t>{2, 4}));
}

// --- ingest_jsonl ---

TEST(Ingest, GroupsByUserPreservingOrder) {
  testutil::TempDir tmp("ingest");
  auto p = tmp.path() / "c.jsonl";
  {
    std::ofstream out(p);
    out << R"({"user":"u1","doc":"a","text":"one two"})" << '\n';
    out << R"({"user":"u2","doc":"b","text":"three"})" << '\n';
    out << R"({"user":"u1","doc":"c","text":"four five six"})" << '\n';
  }
  auto ds = ingest_jsonl(p);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].user_id, "u1");
  ASSERT_EQ(ds[0].documents.size(), 2u);
  EXPECT_EQ(ds[0].documents[0].doc_id, "a");
  EXPECT_EQ(ds[0].documents[1].doc_id, "c");
  EXPECT_EQ(ds[1].user_id, "u2");
}

TEST(Ingest, CopiesLabel) {
  testutil::TempDir tmp("ingest_label");
  auto p = tmp.path() / "c.jsonl";
  {
    std::ofstream out(p);
    out << R"({"user":"u","doc":"a","label":1,"text":"spam spam"})" << '\n';
    out << R"({"user":"u","doc":"b","text":"ham"})" << '\n';
  }
  auto ds = ingest_jsonl(p);
  ASSERT_EQ(ds[0].documents.size(), 2u);
  EXPECT_EQ(ds[0].documents[0].label, std::optional<int>(1));
  EXPECT_FALSE(ds[0].documents[1].label.has_value());
}

TEST(Ingest, MissingTextNamesLine) {
  testutil::TempDir tmp("ingest_bad");
  auto p = tmp.path() / "c.jsonl";
  {
    std::ofstream out(p);
    out << R"({"user":"u","doc":"a","text":"fine"})" << '\n';
    out << R"({"user":"u","doc":"b"})" << '\n';
  }
  try {
    ingest_jsonl(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("text"), std::string::npos);
  }
}

TEST(Ingest, MalformedJsonNamesLine) {
  testutil::TempDir tmp("ingest_bad2");
  auto p = tmp.path() / "c.jsonl";
  {
    std::ofstream out(p);
    out << "{not json\n";
  }
  EXPECT_THROW(ingest_jsonl(p), ParseError);
}

TEST(Ingest, EmptyFileIsEmptyCorpusError) {
  testutil::TempDir tmp("ingest_empty");
  auto p = tmp.path() / "c.jsonl";
  std::ofstream(p).close();
  EXPECT_THROW(ingest_jsonl(p), EmptyCorpusError);
}

TEST(Ingest, JsonlRoundTripPreservesTokensAndBreaks) {
  testutil::TempDir tmp("roundtrip");
  Document doc;
  tokenize_document("alpha beta. gamma <unk> delta", doc);
  std::vector<UserDataset> ds{{"u", {doc}}};
  auto p = tmp.path() / "c.jsonl";
  write_jsonl(ds, p);
  auto back = ingest_jsonl(p);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].documents[0].tokens, doc.tokens);
  EXPECT_EQ(back[0].documents[0].sentence_breaks, doc.sentence_breaks);
}

// --- preprocess ---

TEST(Preprocess, ReplacesOutOfDictionaryWords) {
  std::vector<UserDataset> ds{{"u", {{"d", {"hello", "zzqx9"}, {}, {}}}}};
  auto out = preprocess(ds, WordSet{"hello"});
  EXPECT_EQ(out[0].documents[0].tokens, (std::vector<Token>{"hello", kUnknownToken}));
}

TEST(Preprocess, Idempotent) {
  Rng rng(3);
  std::vector<UserDataset> ds;
  WordSet dict;
  for (int u = 0; u < 4; ++u) {
    UserDataset d{"u" + std::to_string(u), {}};
    for (int i = 0; i < 5; ++i) {
      Document doc{"d" + std::to_string(i), {}, {}, {}};
      for (int t = 0; t < 20; ++t) {
        Token w = "w" + std::to_string(rng.uniform_int(40));
        if (rng.bernoulli(0.5)) dict.insert(w);
        doc.tokens.push_back(std::move(w));
      }
      d.documents.push_back(std::move(doc));
    }
    ds.push_back(std::move(d));
  }
  auto once = preprocess(ds, dict);
  auto twice = preprocess(once, dict);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i)
    for (std::size_t j = 0; j < once[i].documents.size(); ++j)
      EXPECT_EQ(once[i].documents[j].tokens, twice[i].documents[j].tokens);
}

TEST(Preprocess, IdentityWhenAllInDictionary) {
  std::vector<UserDataset> ds{{"u", {{"d", {"a", "b", "a"}, {}, {}}}}};
  auto out = preprocess(ds, WordSet{"a", "b"});
  EXPECT_EQ(out[0].documents[0].tokens, ds[0].documents[0].tokens);
}

TEST(Preprocess, DropsEmptyDocumentsWithCounter) {
  std::vector<UserDataset> ds{{"u", {{"d0", {}, {}, {}}, {"d1", {"a"}, {}, {}}}}};
  PreprocessStats stats;
  auto out = preprocess(ds, WordSet{"a"}, &stats);
  EXPECT_EQ(out[0].documents.size(), 1u);
  EXPECT_EQ(stats.dropped_documents, 1u);
}

// --- build_vocab ---

TEST(BuildVocab, MinCountExcludesRareWords) {
  std::vector<UserDataset> ds{{"u", {}}};
  Document doc{"d", {}, {}, {}};
  for (int i = 0; i < 19; ++i) doc.tokens.push_back("rare");
  for (int i = 0; i < 25; ++i) doc.tokens.push_back("common");
  ds[0].documents.push_back(doc);
  auto v = build_vocab(ds, VocabPolicy::min_count(20));
  EXPECT_FALSE(v.contains("rare"));
  EXPECT_TRUE(v.contains("common"));
  EXPECT_TRUE(v.contains(kUnknownToken));
}

TEST(BuildVocab, MinCountOneKeepsAllTokens) {
  std::vector<UserDataset> ds{{"u", {{"d", {"a", "b", "c", "a"}, {}, {}}}}};
  auto v = build_vocab(ds, VocabPolicy::min_count(1));
  EXPECT_EQ(v.size(), 4);  // a b c + <unk>
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("c"));
}

TEST(BuildVocab, TopKWithLexicographicTies) {
  std::vector<UserDataset> ds{{"u", {}}};
  Document doc{"d", {}, {}, {}};
  auto add = [&](const char* w, int n) {
    for (int i = 0; i < n; ++i) doc.tokens.push_back(w);
  };
  add("a", 5);
  add("b", 4);
  add("c", 4);
  add("d", 1);
  ds[0].documents.push_back(doc);
  auto v = build_vocab(ds, VocabPolicy::top_k(3));
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("b"));
  EXPECT_TRUE(v.contains("c"));
  EXPECT_FALSE(v.contains("d"));
  EXPECT_TRUE(v.contains(kUnknownToken));
  EXPECT_EQ(v.size(), 4);
}

TEST(BuildVocab, NonPositivePolicyIsConfigError) {
  std::vector<UserDataset> ds{{"u", {{"d", {"a"}, {}, {}}}}};
  EXPECT_THROW(build_vocab(ds, VocabPolicy::min_count(0)), ConfigError);
}

TEST(BuildVocab, DummyIsIndexZero) {
  std::vector<UserDataset> ds{{"u", {{"d", {"a", "b"}, {}, {}}}}};
  auto v = build_vocab(ds, VocabPolicy::min_count(1));
  EXPECT_EQ(v.word_at(0), kUnknownToken);
  EXPECT_EQ(v.index_of(kUnknownToken), std::optional<int>(0));
}

// --- split_partition ---

std::vector<UserDataset> many_users(int n) {
  std::vector<UserDataset> ds;
  for (int i = 0; i < n; ++i)
    ds.push_back({"user" + std::to_string(i), {{"d", {"tok"}, {}, {}}}});
  return ds;
}

TEST(SplitPartition, PaperLayout) {
  auto part = split_partition(many_users(279), 100, 50, 50, 7);
  EXPECT_EQ(part.shadow.size(), 100u);
  EXPECT_EQ(part.target_in.size(), 50u);
  EXPECT_EQ(part.target_out.size(), 50u);
  WordSet seen;
  for (const auto* g : {&part.shadow, &part.target_in, &part.target_out})
    for (const auto& u : *g) EXPECT_TRUE(seen.insert(u.user_id).second);
}

TEST(SplitPartition, DeterministicUnderSeed) {
  auto a = split_partition(many_users(30), 10, 5, 5, 42);
  auto b = split_partition(many_users(30), 10, 5, 5, 42);
  for (std::size_t i = 0; i < a.shadow.size(); ++i)
    EXPECT_EQ(a.shadow[i].user_id, b.shadow[i].user_id);
  for (std::size_t i = 0; i < a.target_in.size(); ++i)
    EXPECT_EQ(a.target_in[i].user_id, b.target_in[i].user_id);
}

TEST(SplitPartition, ZeroOutIsEmpty) {
  auto part = split_partition(many_users(10), 5, 5, 0, 1);
  EXPECT_TRUE(part.target_out.empty());
}

TEST(SplitPartition, InsufficientUsersIsSizeError) {
  EXPECT_THROW(split_partition(many_users(10), 8, 2, 1, 1), SizeError);
}

// --- synth_corpus ---

TEST(Synth, PlantingRateOneForcesAdjacency) {
  SynthSpec spec;
  spec.vocab_size = 300;
  spec.users = 4;
  spec.docs_per_user = 6;
  spec.doc_len = 60;
  spec.planted_pairs_per_user = 2;
  spec.planting_rate = 1.0;
  spec.seed = 11;
  auto corpus = synth_corpus(spec);
  for (long long u = 0; u < spec.users; ++u) {
    auto pairs = synth_planted_pairs(spec, u);
    for (const auto& doc : corpus[static_cast<std::size_t>(u)].documents) {
      for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
        for (const auto& [a, b] : pairs) {
          if (doc.tokens[i] != a) continue;
          ASSERT_LT(i + 1, doc.tokens.size()) << "first word at document end";
          EXPECT_EQ(doc.tokens[i + 1], b);
        }
      }
    }
  }
}

TEST(Synth, DeterministicUnderSeed) {
  SynthSpec spec;
  spec.vocab_size = 200;
  spec.users = 3;
  spec.docs_per_user = 4;
  spec.doc_len = 30;
  spec.seed = 5;
  auto a = synth_corpus(spec);
  auto b = synth_corpus(spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t u = 0; u < a.size(); ++u) {
    ASSERT_EQ(a[u].documents.size(), b[u].documents.size());
    for (std::size_t d = 0; d < a[u].documents.size(); ++d)
      EXPECT_EQ(a[u].documents[d].tokens, b[u].documents[d].tokens);
  }
}

// With planting_rate = 0 the second words of planted pairs are never
// emitted, so the distribution of successors of a planted first-word must
// match the free-draw distribution. Chi-square goodness of fit of observed
// successor counts against the generator's own background probabilities,
// pooled over 20 seeds.
TEST(Synth, PlantingRateZeroMatchesBackground) {
  SynthSpec spec;
  spec.vocab_size = 60;
  spec.users = 1;
  spec.docs_per_user = 40;
  spec.doc_len = 120;
  spec.planted_pairs_per_user = 1;
  spec.planting_rate = 0.0;

  // Background probabilities implied by the generator layout (Zipf 1.05),
  // recomputed here from first principles.
  long long reserved = 2 * spec.planted_pairs_per_user * spec.users;
  long long bg = spec.vocab_size - reserved;
  std::vector<double> w(static_cast<std::size_t>(bg));
  double total = 0.0;
  for (long long r = 0; r < bg; ++r) {
    w[static_cast<std::size_t>(r)] = 1.0 / std::pow(static_cast<double>(r + 1), 1.05);
    total += w[static_cast<std::size_t>(r)];
  }

  // Count adjacency: successors of the planted first-word, pooled.
  std::vector<double> observed(static_cast<std::size_t>(bg), 0.0);
  double pair_adjacency = 0.0;
  double n_succ = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = 100 + seed;
    auto corpus = synth_corpus(spec);
    auto pairs = synth_planted_pairs(spec, 0);
    for (const auto& doc : corpus[0].documents) {
      for (std::size_t i = 0; i + 1 < doc.tokens.size(); ++i) {
        if (doc.tokens[i] != pairs[0].first) continue;
        const Token& next = doc.tokens[i + 1];
        if (next == pairs[0].second) pair_adjacency += 1.0;
        // successor is background or another planted-first draw
        if (next.size() > 1 && next[0] == 'w') {
          long long idx = std::stoll(next.substr(1));
          if (idx >= reserved) {
            observed[static_cast<std::size_t>(idx - reserved)] += 1.0;
            n_succ += 1.0;
          }
        }
      }
    }
  }
  EXPECT_EQ(pair_adjacency, 0.0);
  ASSERT_GT(n_succ, 200.0);
  // chi-square against expected background counts (bins with expectation
  // >= 5 to keep the statistic valid); dof ~ #bins - 1
  // Conditioned on the successor being a background word, the distribution
  // is exactly the Zipf background regardless of the planted-first mixture.
  double chi2 = 0.0;
  int bins = 0;
  for (long long r = 0; r < bg; ++r) {
    double want = w[static_cast<std::size_t>(r)] / total;
    double expect = n_succ * want;
    if (expect < 5.0) continue;
    double diff = observed[static_cast<std::size_t>(r)] - expect;
    chi2 += diff * diff / expect;
    ++bins;
  }
  ASSERT_GT(bins, 5);
  // p > 0.01 for chi-square with dof = bins-1: compare against the 99th
  // percentile approximation chi2_99 ~ dof + 2.33*sqrt(2*dof) + 2
  double dof = bins - 1;
  double threshold = dof + 2.33 * std::sqrt(2.0 * dof) + 2.0;
  EXPECT_LT(chi2, threshold) << "dof=" << dof;
}

TEST(Synth, SpamTopicLabelsHalfTheDocuments) {
  SynthSpec spec;
  spec.vocab_size = 300;
  spec.users = 2;
  spec.docs_per_user = 10;
  spec.doc_len = 40;
  spec.spam_topic_size = 20;
  spec.seed = 3;
  auto corpus = synth_corpus(spec);
  for (const auto& user : corpus) {
    int spam = 0;
    for (const auto& d : user.documents) {
      ASSERT_TRUE(d.label.has_value());
      spam += *d.label;
    }
    EXPECT_EQ(spam, 5);
  }
}

TEST(Synth, InvalidSpecIsConfigError) {
  SynthSpec spec;
  spec.vocab_size = 10;
  spec.users = 10;
  spec.planted_pairs_per_user = 2;
  EXPECT_THROW(synth_corpus(spec), ConfigError);
  SynthSpec bad_rate;
  bad_rate.planting_rate = 1.5;
  EXPECT_THROW(synth_corpus(bad_rate), ConfigError);
}

// --- subsample_user ---

UserDataset big_user(int docs) {
  UserDataset u{"u", {}};
  for (int i = 0; i < docs; ++i)
    u.documents.push_back({"d" + std::to_string(i), {"tok"}, {}, {}});
  return u;
}

TEST(Subsample, FractionOneIsIdentity) {
  auto u = big_user(50);
  auto out = subsample_user(u, 1.0, 9);
  ASSERT_EQ(out.documents.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i)
    EXPECT_EQ(out.documents[i].doc_id, u.documents[i].doc_id);
}

TEST(Subsample, BinomialBoundAtHalf) {
  auto out = subsample_user(big_user(10000), 0.5, 4);
  double sigma = std::sqrt(10000 * 0.25);
  EXPECT_NEAR(static_cast<double>(out.documents.size()), 5000.0, 3.0 * sigma);
}

TEST(Subsample, DeterministicAndOrderPreserving) {
  auto u = big_user(200);
  auto a = subsample_user(u, 0.3, 7);
  auto b = subsample_user(u, 0.3, 7);
  ASSERT_EQ(a.documents.size(), b.documents.size());
  for (std::size_t i = 0; i < a.documents.size(); ++i)
    EXPECT_EQ(a.documents[i].doc_id, b.documents[i].doc_id);
  for (std::size_t i = 1; i < a.documents.size(); ++i)
    EXPECT_LT(std::stoi(a.documents[i - 1].doc_id.substr(1)),
              std::stoi(a.documents[i].doc_id.substr(1)));
}

TEST(Subsample, OutOfRangeFractionIsConfigError) {
  EXPECT_THROW(subsample_user(big_user(3), 0.0, 1), ConfigError);
  EXPECT_THROW(subsample_user(big_user(3), 1.5, 1), ConfigError);
}

// --- converter ---

TEST(Convert, MailTreeToJsonl) {
  testutil::TempDir tmp("convert");
  auto root = tmp.path() / "mail";
  std::filesystem::create_directories(root / "alice");
  std::filesystem::create_directories(root / "bob");
  std::ofstream(root / "alice" / "1.txt") << "Hello Bob. See you soon";
  std::ofstream(root / "alice" / "2.txt") << "Second message";
  std::ofstream(root / "bob" / "1.txt") << "Reply text";
  auto out = tmp.path() / "c.jsonl";
  EXPECT_EQ(convert_mail_tree(root, out), 3u);
  auto ds = ingest_jsonl(out);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].user_id, "alice");
  ASSERT_EQ(ds[0].documents.size(), 2u);
  EXPECT_EQ(ds[0].documents[0].tokens[0], "hello");
  EXPECT_EQ(ds[0].documents[0].sentence_breaks.size(), 1u);
  EXPECT_EQ(ds[1].user_id, "bob");
}

TEST(TopFrequentWords, RanksByFrequencyThenWord) {
  std::vector<UserDataset> ds{{"u", {{"d", {"b", "b", "a", "a", "c"}, {}, {}}}}};
  auto top = top_frequent_words(ds, 2);
  EXPECT_EQ(top.size(), 2u);
  EXPECT_TRUE(top.count("a"));
  EXPECT_TRUE(top.count("b"));
}

}  // namespace
}  // namespace milab::corpus
