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
// Security-game harness: the single-target experiment (random bit, train
// with or without the target data, attack, score) and the split experiment
// (train on a random half of users, attack everyone), plus metrics and
// deterministic report emission (JSON + CSV + SVG).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "milab/clf_attack.hpp"
#include "milab/corpus.hpp"
#include "milab/embed_attack.hpp"
#include "milab/embedding.hpp"
#include "milab/error.hpp"
#include "milab/lm.hpp"
#include "milab/lm_attack.hpp"
#include "milab/numio.hpp"
#include "milab/parallel.hpp"
#include "milab/rng.hpp"

namespace milab::harness {

using corpus::UserDataset;

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> precision;  // null when nothing was predicted member
  std::optional<double> recall;     // null when no true members exist
};

/// Standard definitions with member = positive class.
inline Metrics metrics(const std::vector<int>& truth, const std::vector<int>& preds) {
  if (truth.size() != preds.size())
    throw ShapeError("metrics: truth and prediction lengths differ");
  if (truth.empty()) throw ShapeError("metrics: empty input");
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == preds[i]) ++correct;
    if (preds[i] == 1 && truth[i] == 1) ++tp;
    if (preds[i] == 1 && truth[i] == 0) ++fp;
    if (preds[i] == 0 && truth[i] == 1) ++fn;
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return m;
}

// ---------------------------------------------------------------------------
// Game results

/// One attack decision. Truth and prediction are membership bits (1 = the
/// target data was in the training set); the Fig.-1 game-bit convention
/// (b = 0 when the target is included) is applied inside the game loop and
/// translated here so reports read uniformly.
struct GameRow {
  int truth = 0;
  int pred = 0;
  std::uint64_t seed = 0;
};

struct GameResult {
  std::vector<GameRow> rows;

  double s() const {
    if (rows.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& r : rows) correct += static_cast<std::size_t>(r.truth == r.pred);
    return static_cast<double>(correct) / static_cast<double>(rows.size());
  }
  Metrics to_metrics() const {
    std::vector<int> t, p;
    for (const auto& r : rows) {
      t.push_back(r.truth);
      p.push_back(r.pred);
    }
    return metrics(t, p);
  }
};

// ---------------------------------------------------------------------------
// Configuration

enum class ExperimentKind {
  kEmbed,
  kEmbedProxy,
  kEmbedSubsample,
  kClfSeparate,
  kClfShared,
  kLm,
};

inline const char* kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kEmbed: return "embed";
    case ExperimentKind::kEmbedProxy: return "embed-proxy";
    case ExperimentKind::kEmbedSubsample: return "embed-subsample";
    case ExperimentKind::kClfSeparate: return "clf-separate";
    case ExperimentKind::kClfShared: return "clf-shared";
    case ExperimentKind::kLm: return "lm";
  }
  return "unknown";
}

struct ClfExperimentConfig {
  std::size_t n_query_docs = 30;
  int max_reps = 5;
  std::size_t clf_train_docs = 60;
  std::size_t clf_pool_users = 10;  // synthetic users forming the labeled D_c
  clf_attack::ClassifierParams clf;
  std::size_t rf_trees = 100;
};

struct LmExperimentConfig {
  lm::LMParams model;
  std::size_t curation_k = 12;
  std::size_t curation_users = 6;
  std::size_t common_top_n = 150;
};

struct GameConfig {
  ExperimentKind kind = ExperimentKind::kEmbed;
  std::size_t n = 20;            // users in the target training pool
  std::size_t k = 50;            // shadow models per side
  std::size_t target_size = 10;  // documents of the target dataset
  std::size_t repetitions = 40;
  std::size_t repeats_per_target = 1;  // >1 reuses a target across repetitions
  std::optional<double> subsample_fraction;
  bool adaptive = true;              // subsample defense known to the attacker
  double proxy_swap_fraction = 0.2;  // vocabulary swap of the proxy shadow pool
  std::size_t shadow_pool = 0;       // 0 = n + 5
  std::size_t attack_n_users = 0;    // users per shadow model; 0 = n
  corpus::SynthSpec synth;           // per-user generation template
  embedding::EmbeddingParams emb;
  double lambda0 = 0.0;  // 0 = 1/sqrt(k)
  std::size_t cap = 50;
  ClfExperimentConfig clf;
  LmExperimentConfig lm;
  std::optional<int> force_bit;  // rig the game bit (plumbing tests)
  std::uint64_t master_seed = 1;
  int jobs = 1;

  std::size_t shadow_pool_size() const { return shadow_pool ? shadow_pool : n + 5; }
};

// ---------------------------------------------------------------------------
// Synthetic meta-distribution plumbing

namespace detail {

// Pool layout within one repetition: index 0 is reserved for the target
// user, 1..n-1 are the common training users, n is the alternative user
// drawn when the bit excludes the target, and the rest feed the attacker.
struct RepetitionPool {
  UserDataset target;
  std::vector<UserDataset> common;
  UserDataset alternative;
  std::vector<UserDataset> shadow;
};

inline corpus::SynthSpec pool_spec(const GameConfig& cfg, std::size_t extra_users) {
  corpus::SynthSpec spec = cfg.synth;
  spec.users = static_cast<long long>(cfg.n + cfg.shadow_pool_size() + 1 + extra_users);
  if (spec.vocab_size <= 2 * spec.planted_pairs_per_user * spec.users)
    throw ConfigError(
        "synth.vocab_size too small for the experiment pool: need more than " +
        std::to_string(2 * spec.planted_pairs_per_user * spec.users));
  return spec;
}

inline RepetitionPool make_pool(const GameConfig& cfg, std::size_t rep) {
  corpus::SynthSpec spec = pool_spec(cfg, 0);
  spec.seed = derive_stream(cfg.master_seed, rep, 0).next_u64();

  corpus::SynthSpec target_spec = spec;
  target_spec.seed =
      derive_stream(cfg.master_seed, 9001, rep / std::max<std::size_t>(1, cfg.repeats_per_target))
          .next_u64();

  RepetitionPool pool;
  pool.target = corpus::synth_user(target_spec, 0, static_cast<long long>(cfg.target_size));
  for (std::size_t i = 1; i < cfg.n; ++i)
    pool.common.push_back(corpus::synth_user(spec, static_cast<long long>(i),
                                             cfg.synth.docs_per_user));
  pool.alternative = corpus::synth_user(spec, static_cast<long long>(cfg.n),
                                        cfg.synth.docs_per_user);
  for (std::size_t i = 0; i < cfg.shadow_pool_size(); ++i)
    pool.shadow.push_back(corpus::synth_user(
        spec, static_cast<long long>(cfg.n + 1 + i), cfg.synth.docs_per_user));
  return pool;
}

}  // namespace detail

/// Renames a seeded fraction of the distinct words of a corpus to fresh
/// strings: the proxy-distribution shadow pool ("similar but not equal").
inline std::vector<UserDataset> swap_vocabulary(
    const std::vector<UserDataset>& datasets, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ConfigError("swap_vocabulary: fraction must be in [0, 1]");
  std::set<corpus::Token> distinct;
  for (const auto& ds : datasets)
    for (const auto& d : ds.documents)
      for (const auto& t : d.tokens) distinct.insert(t);
  Rng rng = derive_stream(seed, 0);
  std::unordered_map<corpus::Token, corpus::Token> rename;
  for (const auto& w : distinct) {
    if (!rng.bernoulli(fraction)) continue;
    corpus::Token nw = "q" + w;
    while (distinct.count(nw)) nw = "q" + nw;
    rename.emplace(w, std::move(nw));
  }
  std::vector<UserDataset> out = datasets;
  for (auto& ds : out)
    for (auto& d : ds.documents)
      for (auto& t : d.tokens)
        if (auto it = rename.find(t); it != rename.end()) t = it->second;
  return out;
}

// ---------------------------------------------------------------------------
// Single-target security game (embedding target)

/// Attacker hook for plumbing tests; the default runs the real shadow-model
/// attack from the config.
using EmbedAttacker = std::function<bool(
    const UserDataset& target, const std::vector<UserDataset>& shadow_source,
    const embed_attack::WordOracle& target_oracle, std::uint64_t seed)>;

/// The single-target experiment: draw a bit, train the target embedding with
/// the target data (bit 0) or a fresh user (bit 1), run the attack, score.
/// Supports the proxy-distribution and sub-sampling variants. Rows carry
/// membership bits; S equals the fraction of correctly guessed game bits.
inline GameResult run_embed_game(const GameConfig& cfg,
                                 const EmbedAttacker& attacker_override = {}) {
  if (cfg.repetitions < 1) throw ConfigError("run_embed_game: repetitions >= 1");
  if (cfg.n < 2) throw ConfigError("run_embed_game: n >= 2");
  detail::pool_spec(cfg, 0);  // validate sizes before spawning work

  GameResult result;
  result.rows.resize(cfg.repetitions);
  parallel_for(cfg.repetitions, cfg.jobs, [&](std::size_t rep) {
    detail::RepetitionPool pool = detail::make_pool(cfg, rep);
    const std::uint64_t rep_seed = derive_stream(cfg.master_seed, rep, 1).next_u64();
    Rng rng(rep_seed);
    int b = cfg.force_bit ? *cfg.force_bit : static_cast<int>(rng.uniform_int(2));

    std::vector<UserDataset> train_set = pool.common;
    train_set.push_back(b == 0 ? pool.target : pool.alternative);
    if (cfg.kind == ExperimentKind::kEmbedSubsample && cfg.subsample_fraction) {
      for (std::size_t slot = 0; slot < train_set.size(); ++slot)
        train_set[slot] = corpus::subsample_user(
            train_set[slot], *cfg.subsample_fraction,
            derive_stream(cfg.master_seed, rep, 300 + slot).next_u64());
    }
    auto vocab = corpus::build_vocab(
        train_set, corpus::VocabPolicy::min_count(std::max(1, cfg.emb.min_count)));
    embedding::EmbeddingParams emb = cfg.emb;
    emb.seed = derive_stream(cfg.master_seed, rep, 2).next_u64();
    auto target_model = embedding::train_w2v(train_set, vocab, emb);

    std::vector<UserDataset> shadow_source = std::move(pool.shadow);
    if (cfg.kind == ExperimentKind::kEmbedProxy)
      shadow_source =
          swap_vocabulary(shadow_source, cfg.proxy_swap_fraction,
                          derive_stream(cfg.master_seed, rep, 3).next_u64());

    bool member;
    std::uint64_t attack_seed = derive_stream(cfg.master_seed, rep, 4).next_u64();
    if (attacker_override) {
      member = attacker_override(pool.target, shadow_source,
                                 embed_attack::make_oracle(target_model),
                                 attack_seed);
    } else {
      try {
        auto pairs = embed_attack::adjacent_pairs(pool.target);
        std::optional<double> adaptive_fraction;
        if (cfg.kind == ExperimentKind::kEmbedSubsample && cfg.adaptive)
          adaptive_fraction = cfg.subsample_fraction;
        auto ensemble = embed_attack::train_shadows(
            pool.target, shadow_source, cfg.k, cfg.emb,
            cfg.attack_n_users ? cfg.attack_n_users : cfg.n, adaptive_fraction,
            attack_seed, /*jobs=*/1);
        auto attack = embed_attack::fit_attack(ensemble, pairs, cfg.lambda0, cfg.cap);
        member = embed_attack::infer(attack, embed_attack::make_oracle(target_model)).member;
      } catch (const EmptySignalError&) {
        member = false;
      } catch (const NoSignalError&) {
        member = false;
      }
    }
    // Fig.-1 convention: b = 0 means the target was included.
    result.rows[rep] = {b == 0 ? 1 : 0, member ? 1 : 0, rep_seed};
  });
  return result;
}

// ---------------------------------------------------------------------------
// Split security game

/// Fig.-2 experiment: one model per repetition trained on a random half of
/// the users, every user attacked. TrainFn: (in_users, seed) -> model.
/// AttackFn: (model, user, rep, user_index) -> member bit. Returns one
/// GameResult per repetition; rows are per-user membership bits.
template <typename TrainFn, typename AttackFn>
std::vector<GameResult> run_split_game(const std::vector<UserDataset>& users,
                                       std::size_t repetitions,
                                       std::uint64_t master_seed, int jobs,
                                       TrainFn&& train, AttackFn&& attack) {
  if (users.size() < 2 || users.size() % 2 != 0)
    throw ConfigError("run_split_game: n must be even and >= 2");
  if (repetitions < 1) throw ConfigError("run_split_game: repetitions >= 1");

  std::vector<GameResult> results(repetitions);
  parallel_for(repetitions, jobs, [&](std::size_t rep) {
    const std::uint64_t rep_seed = derive_stream(master_seed, rep, 0).next_u64();
    Rng rng(rep_seed);
    std::vector<std::size_t> order(users.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<int> truth(users.size(), 0);
    std::vector<const UserDataset*> in_users;
    for (std::size_t i = 0; i < users.size() / 2; ++i) {
      truth[order[i]] = 1;
      in_users.push_back(&users[order[i]]);
    }
    auto model = train(in_users, derive_stream(master_seed, rep, 1).next_u64());
    GameResult& res = results[rep];
    res.rows.resize(users.size());
    for (std::size_t i = 0; i < users.size(); ++i) {
      bool member = attack(model, users[i], rep, i);
      res.rows[i] = {truth[i], member ? 1 : 0, rep_seed};
    }
  });
  return results;
}

// ---------------------------------------------------------------------------
// Classifier-target experiment (Tables 2 & 3 analogs)

struct ClfGameOutcome {
  GameResult result;
  double mean_clf_test_accuracy = 0.0;
};

inline ClfGameOutcome run_clf_game(const GameConfig& cfg) {
  if (cfg.synth.spam_topic_size <= 0)
    throw ConfigError("run_clf_game: synth.spam_topic_size must be positive");
  const bool shared = cfg.kind == ExperimentKind::kClfShared;
  detail::pool_spec(cfg, cfg.clf.clf_pool_users);

  ClfGameOutcome outcome;
  outcome.result.rows.resize(cfg.repetitions);
  std::vector<double> clf_acc(cfg.repetitions, 0.0);
  parallel_for(cfg.repetitions, cfg.jobs, [&](std::size_t rep) {
    corpus::SynthSpec spec = detail::pool_spec(cfg, cfg.clf.clf_pool_users);
    spec.seed = derive_stream(cfg.master_seed, rep, 0).next_u64();
    corpus::SynthSpec target_spec = spec;
    target_spec.seed =
        derive_stream(cfg.master_seed, 9001,
                      rep / std::max<std::size_t>(1, cfg.repeats_per_target))
            .next_u64();

    UserDataset target =
        corpus::synth_user(target_spec, 0, static_cast<long long>(cfg.target_size));
    std::vector<UserDataset> common;
    for (std::size_t i = 1; i < cfg.n; ++i)
      common.push_back(corpus::synth_user(spec, static_cast<long long>(i),
                                          cfg.synth.docs_per_user));
    UserDataset alternative = corpus::synth_user(
        spec, static_cast<long long>(cfg.n), cfg.synth.docs_per_user);
    std::vector<UserDataset> shadow_source;
    for (std::size_t i = 0; i < cfg.shadow_pool_size(); ++i)
      shadow_source.push_back(corpus::synth_user(
          spec, static_cast<long long>(cfg.n + 1 + i), cfg.synth.docs_per_user));
    std::vector<corpus::Document> clf_pool;
    for (std::size_t i = 0; i < cfg.clf.clf_pool_users; ++i) {
      auto ds = corpus::synth_user(
          spec, static_cast<long long>(cfg.n + 1 + cfg.shadow_pool_size() + i),
          cfg.synth.docs_per_user);
      for (auto& d : ds.documents) clf_pool.push_back(std::move(d));
    }

    const std::uint64_t rep_seed = derive_stream(cfg.master_seed, rep, 1).next_u64();
    Rng rng(rep_seed);
    int b = cfg.force_bit ? *cfg.force_bit : static_cast<int>(rng.uniform_int(2));

    std::vector<UserDataset> train_set = common;
    train_set.push_back(b == 0 ? target : alternative);
    auto vocab = corpus::build_vocab(
        train_set, corpus::VocabPolicy::min_count(std::max(1, cfg.emb.min_count)));
    embedding::EmbeddingParams emb = cfg.emb;
    emb.seed = derive_stream(cfg.master_seed, rep, 2).next_u64();
    auto target_model = embedding::train_w2v(train_set, vocab, emb);

    // The victim classifier: on a D_c sample (separate variant) or on the
    // embedding's own labeled training text (shared variant).
    std::vector<corpus::Document> clf_train_docs;
    if (shared) {
      for (const auto& ds : train_set)
        for (const auto& d : ds.documents)
          if (d.label) clf_train_docs.push_back(d);
    } else {
      Rng crng = derive_stream(cfg.master_seed, rep, 5);
      std::vector<std::size_t> order(clf_pool.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      crng.shuffle(order);
      for (std::size_t i = 0; i < cfg.clf.clf_train_docs && i < order.size(); ++i)
        clf_train_docs.push_back(clf_pool[order[i]]);
    }
    clf_attack::ClassifierParams cp = cfg.clf.clf;
    cp.seed = derive_stream(cfg.master_seed, rep, 6).next_u64();
    auto target_clf = clf_attack::train_target_classifier(target_model, clf_train_docs, cp);
    clf_acc[rep] = target_clf.test_accuracy;

    clf_attack::LabelOracle oracle = [&](const std::vector<corpus::Token>& tokens) {
      return target_clf.clf.predict(clf_attack::embed_document(target_model, tokens));
    };

    bool member;
    try {
      clf_attack::ClfAttackParams ap;
      ap.k = cfg.k;
      ap.emb = cfg.emb;
      ap.n_users = cfg.attack_n_users ? cfg.attack_n_users : cfg.n;
      ap.lambda0 = cfg.lambda0;
      ap.cap = cfg.cap;
      ap.n_query_docs = cfg.clf.n_query_docs;
      ap.max_reps = cfg.clf.max_reps;
      ap.clf_train_docs = cfg.clf.clf_train_docs;
      ap.shared_data = shared;
      ap.clf = cfg.clf.clf;
      ap.rf.n_trees = cfg.clf.rf_trees;
      ap.seed = derive_stream(cfg.master_seed, rep, 7).next_u64();
      ap.jobs = 1;
      auto attack = clf_attack::fit_clf_attack(target, shadow_source, clf_pool, ap);
      member = clf_attack::infer_clf(attack, oracle).member;
    } catch (const EmptySignalError&) {
      member = false;
    } catch (const NoSignalError&) {
      member = false;
    }
    outcome.result.rows[rep] = {b == 0 ? 1 : 0, member ? 1 : 0, rep_seed};
  });
  double acc = 0.0;
  for (double a : clf_acc) acc += a;
  outcome.mean_clf_test_accuracy = acc / static_cast<double>(cfg.repetitions);
  return outcome;
}

// ---------------------------------------------------------------------------
// Language-model experiment (Table "our attack vs baselines" analog)

struct LmGameOutcome {
  std::vector<GameResult> curated;    // one per repetition
  std::vector<GameResult> baseline1;
  std::vector<GameResult> baseline2;
  std::uint64_t curated_queries = 0;
  std::uint64_t baseline1_queries = 0;
  std::uint64_t baseline2_queries = 0;
};

/// The split experiment against the LSTM: one model per repetition trained
/// on a random half of the users; every user probed by the curated attack
/// and both baselines (same model, paired comparison). Curation trains only
/// Word2Vec shadow models.
inline LmGameOutcome run_lm_game(const GameConfig& cfg) {
  if (cfg.n < 2 || cfg.n % 2 != 0)
    throw ConfigError("run_lm_game: n must be even and >= 2");

  corpus::SynthSpec spec = cfg.synth;
  spec.users = static_cast<long long>(cfg.n + cfg.shadow_pool_size());
  if (spec.vocab_size <= 2 * spec.planted_pairs_per_user * spec.users)
    throw ConfigError("run_lm_game: synth.vocab_size too small for the pool");
  spec.seed = derive_stream(cfg.master_seed, 0, 0).next_u64();

  std::vector<UserDataset> users;
  for (std::size_t i = 0; i < cfg.n; ++i)
    users.push_back(corpus::synth_user(spec, static_cast<long long>(i),
                                       cfg.synth.docs_per_user));
  std::vector<UserDataset> shadow;
  for (std::size_t i = 0; i < cfg.shadow_pool_size(); ++i)
    shadow.push_back(corpus::synth_user(spec, static_cast<long long>(cfg.n + i),
                                        cfg.synth.docs_per_user));
  auto common_words = corpus::top_frequent_words(shadow, cfg.lm.common_top_n);

  struct UserOutcome {
    int curated = 0, b1 = 0, b2 = 0;
    std::uint64_t q_cur = 0, q_b1 = 0, q_b2 = 0;
  };
  std::vector<std::vector<UserOutcome>> outcomes(
      cfg.repetitions, std::vector<UserOutcome>(cfg.n));

  auto train = [&](const std::vector<const UserDataset*>& in_users,
                   std::uint64_t seed) {
    std::vector<UserDataset> data;
    data.reserve(in_users.size());
    for (const auto* u : in_users) data.push_back(*u);
    lm::LMParams params = cfg.lm.model;
    params.seed = seed;
    return lm::train_lm(data, params);
  };
  auto attack = [&](const lm::LanguageModel& model, const UserDataset& user,
                    std::size_t rep, std::size_t user_idx) {
    lm_attack::CurationParams cur;
    cur.k = cfg.lm.curation_k;
    cur.n_users = cfg.lm.curation_users;
    cur.emb = cfg.emb;
    cur.lambda0 = cfg.lambda0;
    cur.cap = cfg.cap;
    cur.seed = derive_stream(cfg.master_seed, 10000 + rep, user_idx).next_u64();
    cur.jobs = 1;
    auto pairs = lm_attack::curate_pairs(user, shadow, cur);

    UserOutcome& out = outcomes[rep][user_idx];
    lm::CachingOracle oracle(model);
    auto wrapped = [&oracle](const std::vector<corpus::Token>& prefix) {
      return oracle(prefix);
    };
    auto cur_pred = lm_attack::attack_user(wrapped, user, pairs);
    out.curated = cur_pred.member ? 1 : 0;
    out.q_cur = cur_pred.queries_used;
    auto b1 = lm_attack::baselines(wrapped, user, lm_attack::BaselineMode::kAllPairs);
    out.b1 = b1.member ? 1 : 0;
    out.q_b1 = b1.queries_used;
    auto b2 = lm_attack::baselines(wrapped, user,
                                   lm_attack::BaselineMode::kDictFiltered, common_words);
    out.b2 = b2.member ? 1 : 0;
    out.q_b2 = b2.queries_used;
    return cur_pred.member;
  };

  LmGameOutcome game;
  game.curated =
      run_split_game(users, cfg.repetitions, cfg.master_seed, cfg.jobs, train, attack);
  game.baseline1.resize(cfg.repetitions);
  game.baseline2.resize(cfg.repetitions);
  for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
    auto& b1 = game.baseline1[rep];
    auto& b2 = game.baseline2[rep];
    b1.rows.resize(cfg.n);
    b2.rows.resize(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
      const GameRow& base = game.curated[rep].rows[i];
      const UserOutcome& out = outcomes[rep][i];
      b1.rows[i] = {base.truth, out.b1, base.seed};
      b2.rows[i] = {base.truth, out.b2, base.seed};
      game.curated_queries += out.q_cur;
      game.baseline1_queries += out.q_b1;
      game.baseline2_queries += out.q_b2;
    }
  }
  return game;
}

// ---------------------------------------------------------------------------
// Reports

struct RunRecord {
  std::string experiment;
  std::size_t repetition = 0;
  std::size_t target_size = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  int truth = 0;
  int pred = 0;
  double accuracy = 0.0;  // repetition-level metrics, repeated per row
  std::optional<double> precision;
  std::optional<double> recall;
};

struct ExperimentReport {
  nlohmann::json config_echo;
  std::vector<RunRecord> runs;
};

/// Flattens a per-repetition GameResult list into run records; the embed
/// game's single result becomes repetition-indexed rows.
inline void append_rows(ExperimentReport& report, const std::string& experiment,
                        std::size_t target_size, std::size_t k,
                        const GameResult& result, std::size_t repetition_base = 0,
                        bool row_per_repetition = true) {
  if (row_per_repetition) {
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      const GameRow& r = result.rows[i];
      Metrics m = metrics({r.truth}, {r.pred});
      report.runs.push_back({experiment, repetition_base + i, target_size, k,
                             r.seed, r.truth, r.pred, m.accuracy, m.precision,
                             m.recall});
    }
  } else {
    Metrics m = result.to_metrics();
    for (const GameRow& r : result.rows)
      report.runs.push_back({experiment, repetition_base, target_size, k, r.seed,
                             r.truth, r.pred, m.accuracy, m.precision, m.recall});
  }
}

inline void append_rows(ExperimentReport& report, const std::string& experiment,
                        std::size_t target_size, std::size_t k,
                        const std::vector<GameResult>& per_repetition) {
  for (std::size_t rep = 0; rep < per_repetition.size(); ++rep)
    append_rows(report, experiment, target_size, k, per_repetition[rep], rep,
                /*row_per_repetition=*/false);
}

namespace detail {

struct Series {
  // x -> per-repetition accuracies
  std::map<double, std::vector<double>> points;
};

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

// Minimal self-contained line plot with error bars.
inline void write_svg_plot(const std::filesystem::path& path,
                           const std::string& title, const std::string& x_label,
                           const Series& series) {
  const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = series.points.begin()->first;
  double xmax = series.points.rbegin()->first;
  if (xmax == xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  auto sx = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
  };
  auto sy = [&](double y) { return h - mb - y * (h - mt - mb); };  // y in [0,1]

  std::ofstream out(path);
  if (!out) throw IoError("cannot write plot: " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">"
      << svg_escape(title) << "</text>\n";
  // axes
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double y = 0.25 * i;
    out << "<line x1=\"" << ml - 4 << "\" y1=\"" << sy(y) << "\" x2=\"" << ml
        << "\" y2=\"" << sy(y) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << sy(y) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(y) << "</text>\n";
  }
  std::string polyline;
  for (const auto& [x, accs] : series.points) {
    double m = mean(accs);
    double se = accs.size() > 1
                    ? sample_std(accs) / std::sqrt(static_cast<double>(accs.size()))
                    : 0.0;
    double px = sx(x), py = sy(m);
    polyline += format_double(px) + "," + format_double(py) + " ";
    out << "<line x1=\"" << px << "\" y1=\"" << sy(std::min(1.0, m + se))
        << "\" x2=\"" << px << "\" y2=\"" << sy(std::max(0.0, m - se))
        << "\" stroke=\"#1f77b4\"/>\n";
    out << "<circle cx=\"" << px << "\" cy=\"" << py
        << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    out << "<text x=\"" << px << "\" y=\"" << h - mb + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(x) << "</text>\n";
  }
  out << "<polyline points=\"" << polyline
      << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n";
  out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << svg_escape(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << (mt + h - mb) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 16 "
      << (mt + h - mb) / 2 << ")\">mean accuracy</text>\n";
  out << "</svg>\n";
}

}  // namespace detail

/// Writes report.json, runs.csv, and SVG accuracy curves (x = shadow count
/// and/or target size, error bars = standard error over repetitions).
/// Deterministic file contents given the report.
inline std::vector<std::filesystem::path> emit_report(
    const ExperimentReport& report, const std::filesystem::path& out_dir) {
  if (report.runs.empty()) throw Error("emit_report: no runs to report");
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;

  // runs.csv
  {
    std::filesystem::path p = out_dir / "runs.csv";
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << "experiment,repetition,target_size,k,seed,truth,pred,accuracy,"
           "precision,recall\n";
    for (const auto& r : report.runs) {
      out << r.experiment << ',' << r.repetition << ',' << r.target_size << ','
          << r.k << ',' << r.seed << ',' << r.truth << ',' << r.pred << ','
          << format_double(r.accuracy) << ',';
      if (r.precision) out << format_double(*r.precision);
      out << ',';
      if (r.recall) out << format_double(*r.recall);
      out << '\n';
    }
    written.push_back(p);
  }

  // Per-(experiment, k, target_size) repetition-level accuracy collections.
  std::map<std::tuple<std::string, std::size_t, std::size_t>,
           std::map<std::size_t, double>>
      groups;
  for (const auto& r : report.runs)
    groups[{r.experiment, r.k, r.target_size}][r.repetition] = r.accuracy;

  // report.json
  {
    std::filesystem::path p = out_dir / "report.json";
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& [key, reps] : groups) {
      std::vector<double> accs;
      for (const auto& [rep, acc] : reps) accs.push_back(acc);
      const auto& [exp, k, ts] = key;
      // precision/recall means exclude undefined entries
      std::vector<double> precs, recs;
      std::set<std::pair<std::string, std::size_t>> seen;
      for (const auto& r : report.runs) {
        if (r.experiment != exp || r.k != k || r.target_size != ts) continue;
        if (!seen.insert({r.experiment, r.repetition}).second) continue;
        if (r.precision) precs.push_back(*r.precision);
        if (r.recall) recs.push_back(*r.recall);
      }
      nlohmann::json entry{{"experiment", exp},
                           {"k", k},
                           {"target_size", ts},
                           {"repetitions", accs.size()},
                           {"accuracy_mean", detail::mean(accs)},
                           {"accuracy_std", detail::sample_std(accs)}};
      entry["precision_mean"] =
          precs.empty() ? nlohmann::json() : nlohmann::json(detail::mean(precs));
      entry["recall_mean"] =
          recs.empty() ? nlohmann::json() : nlohmann::json(detail::mean(recs));
      summary.push_back(std::move(entry));
    }
    nlohmann::json doc{{"config", report.config_echo}, {"summary", summary}};
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << doc.dump(2) << '\n';
    written.push_back(p);
  }

  // SVG curves per experiment: accuracy vs k (per target size) and accuracy
  // vs target size (per k), whenever the axis has more than one value.
  std::set<std::string> experiments;
  for (const auto& r : report.runs) experiments.insert(r.experiment);
  for (const auto& exp : experiments) {
    std::set<std::size_t> ks, sizes;
    for (const auto& [key, reps] : groups) {
      if (std::get<0>(key) != exp) continue;
      ks.insert(std::get<1>(key));
      sizes.insert(std::get<2>(key));
    }
    if (ks.size() > 1) {
      for (std::size_t ts : sizes) {
        detail::Series series;
        for (const auto& [key, reps] : groups) {
          if (std::get<0>(key) != exp || std::get<2>(key) != ts) continue;
          for (const auto& [rep, acc] : reps)
            series.points[static_cast<double>(std::get<1>(key))].push_back(acc);
        }
        std::filesystem::path p =
            out_dir / (exp + "_accuracy_vs_k_size" + std::to_string(ts) + ".svg");
        detail::write_svg_plot(p, exp + ": accuracy vs shadow models (target size " +
                                      std::to_string(ts) + ")",
                               "shadow models k", series);
        written.push_back(p);
      }
    }
    if (sizes.size() > 1) {
      for (std::size_t k : ks) {
        detail::Series series;
        for (const auto& [key, reps] : groups) {
          if (std::get<0>(key) != exp || std::get<1>(key) != k) continue;
          for (const auto& [rep, acc] : reps)
            series.points[static_cast<double>(std::get<2>(key))].push_back(acc);
        }
        std::filesystem::path p =
            out_dir / (exp + "_accuracy_vs_size_k" + std::to_string(k) + ".svg");
        detail::write_svg_plot(
            p, exp + ": accuracy vs target size (k=" + std::to_string(k) + ")",
            "target dataset size (documents)", series);
        written.push_back(p);
      }
    }
  }
  return written;
}

}  // namespace milab::harness
