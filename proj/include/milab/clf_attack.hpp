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
//
// Membership inference against a label-only text classifier built on an
// embedding: target-classifier construction, repeated-word query crafting,
// and random-forest inference over the collected label vectors.

#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "milab/corpus.hpp"
#include "milab/embed_attack.hpp"
#include "milab/embedding.hpp"
#include "milab/error.hpp"
#include "milab/learners.hpp"
#include "milab/parallel.hpp"
#include "milab/rng.hpp"

namespace milab::clf_attack {

using corpus::Document;
using corpus::Token;
using corpus::UserDataset;
using embedding::EmbeddingModel;

/// Label-only access to a classifier: tokens in, {0,1} out.
using LabelOracle = std::function<int(const std::vector<Token>&)>;

// ---------------------------------------------------------------------------
// Document embedding

/// Mean of the in-vocabulary token vectors; the zero vector when none is in
/// vocabulary.
inline std::vector<double> embed_document(const EmbeddingModel& model,
                                          const std::vector<Token>& tokens) {
  std::vector<double> sum(static_cast<std::size_t>(model.dim()), 0.0);
  std::size_t n = 0;
  for (const auto& t : tokens) {
    auto v = model.lookup(t);
    if (!v) continue;
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += (*v)[j];
    ++n;
  }
  if (n > 0)
    for (double& s : sum) s /= static_cast<double>(n);
  return sum;
}

inline std::vector<double> embed_document(const EmbeddingModel& model,
                                          const Document& doc) {
  return embed_document(model, doc.tokens);
}

// ---------------------------------------------------------------------------
// Target classifier

struct ClassifierParams {
  double reg = 0.01;
  std::size_t epochs = 60;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct TargetClassifier {
  learners::LinearClassifier clf;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

namespace detail {

inline learners::LinearClassifier fit_linear_on_docs(
    const EmbeddingModel& model, const std::vector<const Document*>& docs,
    double reg, std::size_t epochs, std::uint64_t seed) {
  learners::DesignMatrix x(docs.size(), static_cast<std::size_t>(model.dim()));
  std::vector<int> y(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i]->label)
      throw DegenerateDataError("classifier training: unlabeled document");
    auto e = embed_document(model, *docs[i]);
    for (std::size_t j = 0; j < e.size(); ++j) x.at(i, j) = e[j];
    y[i] = *docs[i]->label;
  }
  return learners::svm_fit(x, y, reg, epochs, seed);
}

inline double accuracy_on_docs(const EmbeddingModel& model,
                               const learners::LinearClassifier& clf,
                               const std::vector<const Document*>& docs) {
  if (docs.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Document* d : docs)
    if (clf.predict(embed_document(model, *d)) == *d->label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(docs.size());
}

}  // namespace detail

/// Linear max-margin classifier on mean-of-vector document embeddings, with a
/// seeded held-out split for the reported test accuracy.
inline TargetClassifier train_target_classifier(const EmbeddingModel& model,
                                                const std::vector<Document>& labeled,
                                                const ClassifierParams& params) {
  std::vector<const Document*> docs;
  for (const auto& d : labeled)
    if (d.label) docs.push_back(&d);
  bool has0 = false, has1 = false;
  for (const Document* d : docs) (*d->label == 0 ? has0 : has1) = true;
  if (!has0 || !has1)
    throw DegenerateDataError("train_target_classifier: need both classes");

  Rng rng = derive_stream(params.seed, 0);
  std::vector<const Document*> shuffled = docs;
  rng.shuffle(shuffled);
  std::size_t test_n =
      static_cast<std::size_t>(params.test_fraction * static_cast<double>(shuffled.size()));
  std::vector<const Document*> test(shuffled.begin(),
                                    shuffled.begin() + static_cast<std::ptrdiff_t>(test_n));
  std::vector<const Document*> train(shuffled.begin() + static_cast<std::ptrdiff_t>(test_n),
                                     shuffled.end());
  if (train.empty())
    throw DegenerateDataError("train_target_classifier: empty training split");

  TargetClassifier out;
  out.clf = detail::fit_linear_on_docs(model, train, params.reg, params.epochs,
                                       derive_stream(params.seed, 1).next_u64());
  out.train_accuracy = detail::accuracy_on_docs(model, out.clf, train);
  out.test_accuracy = test.empty() ? 0.0 : detail::accuracy_on_docs(model, out.clf, test);
  return out;
}

// ---------------------------------------------------------------------------
// Query crafting

struct QueryPoint {
  std::size_t base_doc_index = 0;
  Token word;
  int reps = 0;
  std::vector<Token> tokens;  // base doc tokens followed by `reps` copies of word
};

/// Canonical order: base_doc_index asc, then word in curated order, then reps
/// asc. Total points = docs * |W| * (max_reps + 1).
struct QuerySet {
  std::vector<QueryPoint> points;
  std::size_t n_docs = 0;
  std::size_t n_words = 0;
  int max_reps = 0;
};

inline QuerySet craft_queries(const std::vector<Token>& query_words,
                              const std::vector<Document>& query_docs,
                              int max_reps = 5) {
  if (query_words.empty())
    throw NoSignalError("craft_queries: empty curated word set");
  if (query_docs.empty()) throw ConfigError("craft_queries: no query documents");
  if (max_reps < 0) throw ConfigError("craft_queries: max_reps must be >= 0");

  QuerySet qs;
  qs.n_docs = query_docs.size();
  qs.n_words = query_words.size();
  qs.max_reps = max_reps;
  qs.points.reserve(query_docs.size() * query_words.size() *
                    static_cast<std::size_t>(max_reps + 1));
  for (std::size_t d = 0; d < query_docs.size(); ++d) {
    for (const Token& w : query_words) {
      for (int j = 0; j <= max_reps; ++j) {
        QueryPoint pt;
        pt.base_doc_index = d;
        pt.word = w;
        pt.reps = j;
        pt.tokens = query_docs[d].tokens;
        for (int r = 0; r < j; ++r) pt.tokens.push_back(w);
        qs.points.push_back(std::move(pt));
      }
    }
  }
  return qs;
}

struct LabelVector {
  std::vector<int> labels;
};

/// Collects one label per query point in canonical order from a label-only
/// oracle.
inline LabelVector collect_labels(const QuerySet& queries, const LabelOracle& oracle) {
  LabelVector lv;
  lv.labels.reserve(queries.points.size());
  for (const auto& pt : queries.points) lv.labels.push_back(oracle(pt.tokens));
  return lv;
}

namespace detail {

// Label collection fast path: reuses per-document embedding sums. The
// accumulation order matches embed_document on the materialized tokens
// exactly (base tokens left to right, then `reps` additions of the word), so
// results are bit-identical to the naive path.
struct DocSums {
  std::vector<std::vector<double>> sum;
  std::vector<std::size_t> count;
};

inline DocSums doc_sums(const EmbeddingModel& model,
                        const std::vector<Document>& docs) {
  DocSums out;
  out.sum.reserve(docs.size());
  out.count.reserve(docs.size());
  for (const auto& d : docs) {
    std::vector<double> s(static_cast<std::size_t>(model.dim()), 0.0);
    std::size_t n = 0;
    for (const auto& t : d.tokens) {
      auto v = model.lookup(t);
      if (!v) continue;
      for (std::size_t j = 0; j < s.size(); ++j) s[j] += (*v)[j];
      ++n;
    }
    out.sum.push_back(std::move(s));
    out.count.push_back(n);
  }
  return out;
}

inline LabelVector collect_labels_fast(const QuerySet& queries,
                                       const EmbeddingModel& model,
                                       const learners::LinearClassifier& clf,
                                       const DocSums& sums) {
  LabelVector lv;
  lv.labels.reserve(queries.points.size());
  std::vector<double> e;
  for (const auto& pt : queries.points) {
    e = sums.sum[pt.base_doc_index];
    std::size_t n = sums.count[pt.base_doc_index];
    auto v = model.lookup(pt.word);
    if (v) {
      for (int r = 0; r < pt.reps; ++r)
        for (std::size_t j = 0; j < e.size(); ++j) e[j] += (*v)[j];
      n += static_cast<std::size_t>(pt.reps);
    }
    if (n > 0)
      for (double& x : e) x /= static_cast<double>(n);
    lv.labels.push_back(clf.predict(e));
  }
  return lv;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Attack fitting & inference

struct ClfAttackParams {
  std::size_t k = 50;
  embedding::EmbeddingParams emb;
  std::size_t n_users = 10;          // users per shadow embedding
  double lambda0 = 0.0;              // 0 = 1/sqrt(k)
  std::size_t cap = 50;
  std::size_t n_query_docs = 100;
  int max_reps = 5;
  std::size_t clf_train_docs = 100;  // per shadow classifier (separate-data variant)
  bool shared_data = false;          // Table-3 variant: classifier reuses embedding text
  ClassifierParams clf;
  learners::RfParams rf;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct ClfAttack {
  learners::RandomForest forest;
  QuerySet queries;
  embed_attack::SparseLinearAttack prep;  // the underlying word-pair selection
};

/// Runs the embedding-attack preparation to select W, trains 2k shadow
/// classifiers (each on its shadow embedding's view of a sampled classifier
/// dataset, or of the embedding's own training text in the shared-data
/// variant), and fits a random forest on the membership-labeled label
/// vectors.
inline ClfAttack fit_clf_attack(const UserDataset& target,
                                const std::vector<UserDataset>& shadow_source,
                                const std::vector<Document>& clf_data_source,
                                const ClfAttackParams& params) {
  if (params.k < 1) throw ConfigError("fit_clf_attack: k must be >= 1");

  auto pairs = embed_attack::adjacent_pairs(target);
  auto ensemble = embed_attack::train_shadows(
      target, shadow_source, params.k, params.emb, params.n_users,
      std::nullopt, derive_stream(params.seed, 1).next_u64(), params.jobs);
  auto prep = embed_attack::fit_attack(ensemble, pairs, params.lambda0, params.cap);

  // Query documents come from the classifier distribution; in the
  // shared-data variant that distribution is the attacker's shadow text.
  std::vector<Document> pool = clf_data_source;
  if (params.shared_data) {
    pool.clear();
    for (const auto& ds : shadow_source)
      for (const auto& d : ds.documents) pool.push_back(d);
  }
  if (pool.empty()) throw ConfigError("fit_clf_attack: empty classifier data pool");

  Rng qrng = derive_stream(params.seed, 2);
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  qrng.shuffle(order);
  std::vector<Document> query_docs;
  for (std::size_t i = 0; i < params.n_query_docs && i < order.size(); ++i)
    query_docs.push_back(pool[order[i]]);
  QuerySet queries = craft_queries(prep.query_words, query_docs, params.max_reps);

  const std::size_t rows = 2 * params.k;
  learners::DesignMatrix x(rows, queries.points.size());
  std::vector<int> y(rows, 0);

  parallel_for(rows, params.jobs, [&](std::size_t r) {
    const bool with = r < params.k;
    const std::size_t i = with ? r : r - params.k;
    const EmbeddingModel& model =
        with ? ensemble.with_target[i] : ensemble.without_target[i];

    std::vector<const Document*> clf_docs;
    if (params.shared_data) {
      for (std::size_t uidx : ensemble.common_users[i])
        for (const auto& d : shadow_source[uidx].documents)
          if (d.label) clf_docs.push_back(&d);
      const UserDataset& extra =
          with ? target : shadow_source[ensemble.held_out[i]];
      for (const auto& d : extra.documents)
        if (d.label) clf_docs.push_back(&d);
    } else {
      Rng rng = derive_stream(params.seed, 3, r);
      std::vector<std::size_t> docs_order(pool.size());
      for (std::size_t j = 0; j < docs_order.size(); ++j) docs_order[j] = j;
      rng.shuffle(docs_order);
      for (std::size_t j = 0; j < params.clf_train_docs && j < docs_order.size(); ++j)
        if (pool[docs_order[j]].label) clf_docs.push_back(&pool[docs_order[j]]);
    }
    auto clf = detail::fit_linear_on_docs(
        model, clf_docs, params.clf.reg, params.clf.epochs,
        derive_stream(params.seed, 4, r).next_u64());

    auto sums = detail::doc_sums(model, query_docs);
    LabelVector lv = detail::collect_labels_fast(queries, model, clf, sums);
    for (std::size_t c = 0; c < lv.labels.size(); ++c)
      x.at(r, c) = static_cast<double>(lv.labels[c]);
    y[r] = with ? 1 : 0;
  });

  ClfAttack attack;
  learners::RfParams rf = params.rf;
  rf.jobs = params.jobs;
  attack.forest = learners::rf_fit(x, y, rf, derive_stream(params.seed, 5).next_u64());
  attack.queries = std::move(queries);
  attack.prep = std::move(prep);
  return attack;
}

struct ClfInference {
  bool member = false;
  std::size_t queries_used = 0;
};

/// Queries the label-only oracle on every point in canonical order and feeds
/// the label vector to the forest (class 1 = member).
inline ClfInference infer_clf(const ClfAttack& attack,
                              const LabelOracle& target_oracle) {
  LabelVector lv = collect_labels(attack.queries, target_oracle);
  std::vector<double> features(lv.labels.begin(), lv.labels.end());
  ClfInference res;
  res.member = attack.forest.predict(features) == 1;
  res.queries_used = lv.labels.size();
  return res;
}

/// Audit dump: one row per query point (doc_index, word, reps, label).
inline void dump_labels(const QuerySet& queries, const LabelVector& labels,
                        const std::filesystem::path& path) {
  if (labels.labels.size() != queries.points.size())
    throw ShapeError("dump_labels: label vector does not match query set");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write label dump: " + path.string());
  out << "doc_index,word,reps,label\n";
  for (std::size_t i = 0; i < queries.points.size(); ++i) {
    const auto& pt = queries.points[i];
    out << pt.base_doc_index << ',' << pt.word << ',' << pt.reps << ','
        << labels.labels[i] << '\n';
  }
}

}  // namespace milab::clf_attack
