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
// Black-box membership inference against word embeddings: adjacent-pair
// distance signatures, shadow-ensemble training, sparse linear attack
// fitting, and the query-efficient inference step, including the
// proxy-distribution and sub-sampling-adaptive variants.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "milab/corpus.hpp"
#include "milab/embedding.hpp"
#include "milab/error.hpp"
#include "milab/learners.hpp"
#include "milab/parallel.hpp"
#include "milab/rng.hpp"

namespace milab::embed_attack {

using corpus::Token;
using corpus::UserDataset;
using embedding::EmbeddingModel;
using embedding::EmbeddingParams;

/// Word -> vector-or-missing; the only access the attack has to a model.
using WordOracle =
    std::function<std::optional<std::vector<double>>(const Token&)>;

inline WordOracle make_oracle(const EmbeddingModel& model) {
  return [&model](const Token& w) -> std::optional<std::vector<double>> {
    auto v = model.lookup(w);
    if (!v) return std::nullopt;
    return std::vector<double>(v->begin(), v->end());
  };
}

// ---------------------------------------------------------------------------
// Adjacent pairs

struct PairOccurrence {
  std::string doc_id;
  std::size_t position;  // index of the first word within the document
};

/// Deduplicated ordered consecutive word pairs of a target dataset, with the
/// occurrence sites of each pair. Pairs never cross document boundaries and
/// never contain the dummy token.
struct PairList {
  std::vector<std::pair<Token, Token>> pairs;
  std::vector<std::vector<PairOccurrence>> provenance;

  std::size_t size() const { return pairs.size(); }
};

inline PairList adjacent_pairs(const UserDataset& target) {
  PairList out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& doc : target.documents) {
    for (std::size_t i = 0; i + 1 < doc.tokens.size(); ++i) {
      const Token& a = doc.tokens[i];
      const Token& b = doc.tokens[i + 1];
      if (a == corpus::kUnknownToken || b == corpus::kUnknownToken) continue;
      std::string key = a + '\x1f' + b;
      auto [it, inserted] = index.emplace(std::move(key), out.pairs.size());
      if (inserted) {
        out.pairs.emplace_back(a, b);
        out.provenance.emplace_back();
      }
      out.provenance[it->second].push_back({doc.doc_id, i});
    }
  }
  if (out.pairs.empty())
    throw EmptySignalError("adjacent_pairs: no eligible pairs in target data");
  return out;
}

// ---------------------------------------------------------------------------
// Signatures

/// Per-feature statistics learned from the shadow ensemble: standardization
/// and the imputation value (shadow mean) used when a model is missing a
/// word of the pair.
struct Scaler {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<double> imputation;
};

struct Signature {
  std::vector<double> values;
  std::vector<std::uint8_t> imputed;
};

/// Distance vector over the pair list. With a scaler, missing features take
/// the stored imputation value; without one (shadow collection), they are
/// left as NaN for the caller to fill from the ensemble means.
inline Signature signature(const WordOracle& oracle, const PairList& pairs,
                           const Scaler* scaler = nullptr) {
  if (pairs.size() == 0) throw EmptySignalError("signature: empty pair list");
  Signature sig;
  sig.values.resize(pairs.size());
  sig.imputed.assign(pairs.size(), 0);

  std::unordered_map<Token, std::optional<std::vector<double>>> cache;
  auto query = [&](const Token& w) -> const std::optional<std::vector<double>>& {
    auto it = cache.find(w);
    if (it == cache.end()) it = cache.emplace(w, oracle(w)).first;
    return it->second;
  };

  std::size_t imputed_count = 0;
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    const auto& [a, b] = pairs.pairs[j];
    const auto& va = query(a);
    const auto& vb = query(b);
    if (va && vb) {
      double s = 0.0;
      for (std::size_t i = 0; i < va->size(); ++i) {
        double d = (*va)[i] - (*vb)[i];
        s += d * d;
      }
      sig.values[j] = std::sqrt(s);
    } else {
      sig.imputed[j] = 1;
      ++imputed_count;
      sig.values[j] = scaler ? scaler->imputation[j]
                             : std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (scaler && imputed_count == pairs.size())
    throw EmptySignalError("signature: every feature required imputation");
  return sig;
}

// ---------------------------------------------------------------------------
// Shadow ensemble

struct ShadowEnsemble {
  std::vector<EmbeddingModel> with_target;
  std::vector<EmbeddingModel> without_target;
  std::size_t k = 0;
  // Training composition per model i, as indices into the shadow source:
  // model i trained on common_users[i] plus (target | shadow[held_out[i]]).
  // Downstream attacks reuse this in the shared-data classifier variant.
  std::vector<std::vector<std::size_t>> common_users;
  std::vector<std::size_t> held_out;
};

/// Trains k with-target and k without-target shadow embeddings. Model i
/// samples n_users-1 shadow users plus one held-out user so every training
/// set has equal user counts; with the adaptive variant, every contributing
/// dataset (including the target's) is independently subsampled per model.
/// All randomness is derived from master_seed, so ensembles reproduce
/// bit-identically for any jobs value.
inline ShadowEnsemble train_shadows(
    const UserDataset& target, const std::vector<UserDataset>& shadow_source,
    std::size_t k, const EmbeddingParams& params, std::size_t n_users,
    std::optional<double> subsample_fraction, std::uint64_t master_seed,
    int jobs = 1) {
  if (k < 1) throw ConfigError("train_shadows: k must be >= 1");
  if (n_users < 1) throw ConfigError("train_shadows: n_users must be >= 1");
  if (shadow_source.size() < n_users)
    throw SizeError("train_shadows: need " + std::to_string(n_users) +
                    " shadow users, have " + std::to_string(shadow_source.size()));
  if (subsample_fraction &&
      (!(*subsample_fraction > 0.0) || *subsample_fraction > 1.0))
    throw ConfigError("train_shadows: subsample fraction must be in (0, 1]");

  // One shared vocabulary over everything the attacker holds, mirroring the
  // target trainer's convention of a corpus-wide vocabulary.
  std::vector<UserDataset> all = shadow_source;
  all.push_back(target);
  auto vocab = corpus::build_vocab(
      all, corpus::VocabPolicy::min_count(std::max(1, params.min_count)));

  ShadowEnsemble ens;
  ens.k = k;
  ens.with_target.resize(k);
  ens.without_target.resize(k);

  ens.common_users.resize(k);
  ens.held_out.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    Rng rng = derive_stream(master_seed, i, 0);
    std::vector<std::size_t> order(shadow_source.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    rng.shuffle(order);
    ens.common_users[i].assign(
        order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_users - 1));
    ens.held_out[i] = order[n_users - 1];
  }

  parallel_for(2 * k, jobs, [&](std::size_t task) {
    const std::size_t i = task / 2;
    const bool with = (task % 2) == 0;
    std::vector<UserDataset> train;
    train.reserve(n_users);
    for (std::size_t idx : ens.common_users[i]) train.push_back(shadow_source[idx]);
    train.push_back(with ? target : shadow_source[ens.held_out[i]]);
    if (subsample_fraction) {
      for (std::size_t slot = 0; slot < train.size(); ++slot) {
        std::uint64_t s =
            derive_stream(master_seed, i, (with ? 100 : 200) + slot).next_u64();
        train[slot] = corpus::subsample_user(train[slot], *subsample_fraction, s);
      }
    }
    EmbeddingParams p = params;
    p.seed = derive_stream(master_seed, i, with ? 1 : 2).next_u64();
    auto& dst = with ? ens.with_target[i] : ens.without_target[i];
    dst = embedding::train_w2v(train, vocab, p);
  });
  return ens;
}

// ---------------------------------------------------------------------------
// Attack fitting

struct SparseLinearAttack {
  learners::SparseLinearModel model;
  PairList pairs;
  Scaler scaler;
  std::vector<Token> query_words;  // words of non-zero-weight pairs, in order
  bool no_signal = false;
};

/// Builds the standardized signature design matrix over the ensemble
/// (labels +1 with-target / -1 without), runs capped LASSO (lambda0 defaults
/// to 1/sqrt(k)), and derives the query word set. An all-zero model after
/// escalation yields a no-signal attack that always predicts non-member.
inline SparseLinearAttack fit_attack(const ShadowEnsemble& ensemble,
                                     const PairList& pairs, double lambda0 = 0.0,
                                     std::size_t cap = 50) {
  const std::size_t k = ensemble.k;
  if (k == 0 || ensemble.with_target.size() != k ||
      ensemble.without_target.size() != k)
    throw ConfigError("fit_attack: inconsistent ensemble");
  const std::size_t p = pairs.size();
  const std::size_t rows = 2 * k;

  std::vector<Signature> sigs;
  sigs.reserve(rows);
  for (const auto& m : ensemble.with_target)
    sigs.push_back(signature(make_oracle(m), pairs));
  for (const auto& m : ensemble.without_target)
    sigs.push_back(signature(make_oracle(m), pairs));

  // Per-feature shadow means over observed entries double as the imputation
  // values; a feature no shadow model could score is neutralized at 0 and
  // then has zero variance, so the LASSO can never select it.
  Scaler scaler;
  scaler.imputation.assign(p, 0.0);
  std::size_t observed_total = 0;
  for (std::size_t j = 0; j < p; ++j) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (const auto& s : sigs)
      if (!s.imputed[j]) {
        sum += s.values[j];
        ++cnt;
      }
    if (cnt > 0) scaler.imputation[j] = sum / static_cast<double>(cnt);
    observed_total += cnt;
  }
  if (observed_total == 0)
    throw EmptySignalError("fit_attack: no shadow model could score any pair");

  learners::DesignMatrix x(rows, p);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < p; ++j)
      x.at(r, j) = sigs[r].imputed[j] ? scaler.imputation[j] : sigs[r].values[j];
  x.standardize();
  scaler.means = x.feature_means();
  scaler.stds = x.feature_stds();

  std::vector<double> y(rows, 1.0);
  for (std::size_t r = k; r < rows; ++r) y[r] = -1.0;

  double l0 = lambda0 > 0.0 ? lambda0 : 1.0 / std::sqrt(static_cast<double>(k));
  SparseLinearAttack attack;
  attack.model = learners::lasso_cap(x, y, l0, cap);
  attack.pairs = pairs;
  attack.scaler = std::move(scaler);

  std::unordered_set<Token> seen;
  for (const auto& [j, w] : attack.model.weights) {
    const auto& pr = pairs.pairs[static_cast<std::size_t>(j)];
    for (const Token* t : {&pr.first, &pr.second})
      if (seen.insert(*t).second) attack.query_words.push_back(*t);
  }
  attack.no_signal = attack.model.weights.empty();
  return attack;
}

// ---------------------------------------------------------------------------
// Inference

struct EmbedInference {
  bool member = false;
  double score = 0.0;
  std::size_t queries_used = 0;
};

/// Queries only the curated word set, scores the standardized (and, where
/// needed, imputed) signature restricted to selected features, and returns
/// MEMBER iff the score is positive (ties are non-member).
inline EmbedInference infer(const SparseLinearAttack& attack,
                            const WordOracle& target_oracle) {
  EmbedInference res;
  if (attack.no_signal || attack.query_words.empty()) return res;

  std::unordered_map<Token, std::optional<std::vector<double>>> cache;
  for (const Token& w : attack.query_words) cache.emplace(w, target_oracle(w));
  res.queries_used = cache.size();

  double score = attack.model.intercept;
  std::size_t imputed = 0, selected = 0;
  for (const auto& [j, weight] : attack.model.weights) {
    ++selected;
    const std::size_t jj = static_cast<std::size_t>(j);
    const auto& [a, b] = attack.pairs.pairs[jj];
    const auto& va = cache.at(a);
    const auto& vb = cache.at(b);
    double value;
    if (va && vb) {
      double s = 0.0;
      for (std::size_t i = 0; i < va->size(); ++i) {
        double d = (*va)[i] - (*vb)[i];
        s += d * d;
      }
      value = std::sqrt(s);
    } else {
      value = attack.scaler.imputation[jj];
      ++imputed;
    }
    score += weight * (value - attack.scaler.means[jj]) / attack.scaler.stds[jj];
  }
  if (selected > 0 && imputed == selected)
    throw EmptySignalError("infer: every selected feature required imputation");
  res.score = score;
  res.member = score > 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// Serialization & debugging dumps

inline nlohmann::json to_json(const SparseLinearAttack& a) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [x, y] : a.pairs.pairs) pairs.push_back({x, y});
  return {{"model", learners::to_json(a.model)},
          {"pairs", std::move(pairs)},
          {"scaler",
           {{"means", a.scaler.means},
            {"stds", a.scaler.stds},
            {"imputation", a.scaler.imputation}}},
          {"query_words", a.query_words},
          {"no_signal", a.no_signal}};
}

inline SparseLinearAttack attack_from_json(const nlohmann::json& j) {
  SparseLinearAttack a;
  a.model = learners::sparse_linear_from_json(j.at("model"));
  for (const auto& pj : j.at("pairs"))
    a.pairs.pairs.emplace_back(pj.at(0).get<Token>(), pj.at(1).get<Token>());
  a.pairs.provenance.resize(a.pairs.pairs.size());
  a.scaler.means = j.at("scaler").at("means").get<std::vector<double>>();
  a.scaler.stds = j.at("scaler").at("stds").get<std::vector<double>>();
  a.scaler.imputation =
      j.at("scaler").at("imputation").get<std::vector<double>>();
  a.query_words = j.at("query_words").get<std::vector<Token>>();
  a.no_signal = j.at("no_signal").get<bool>();
  return a;
}

/// Raw shadow signatures as CSV (side,model,feature columns) for audits.
inline void dump_signatures(const ShadowEnsemble& ensemble,
                            const PairList& pairs,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write signature dump: " + path.string());
  out << "side,model";
  for (std::size_t j = 0; j < pairs.size(); ++j)
    out << ",pair" << j;
  out << '\n';
  auto emit = [&](const char* side, std::size_t idx, const EmbeddingModel& m) {
    Signature s = signature(make_oracle(m), pairs);
    out << side << ',' << idx;
    for (std::size_t j = 0; j < s.values.size(); ++j) {
      out << ',';
      if (s.imputed[j])
        out << "NA";
      else
        out << format_double(s.values[j]);
    }
    out << '\n';
  };
  for (std::size_t i = 0; i < ensemble.k; ++i) emit("with", i, ensemble.with_target[i]);
  for (std::size_t i = 0; i < ensemble.k; ++i) emit("without", i, ensemble.without_target[i]);
}

}  // namespace milab::embed_attack
