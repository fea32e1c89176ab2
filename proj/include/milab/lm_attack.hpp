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
// Label-only membership inference against a next-word language model:
// word-pair curation via the embedding attack (no shadow language models),
// the any-hit probe, the threshold variant, and the two baselines.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "milab/corpus.hpp"
#include "milab/embed_attack.hpp"
#include "milab/error.hpp"
#include "milab/lm.hpp"

namespace milab::lm_attack {

using corpus::Token;
using corpus::UserDataset;
using corpus::WordSet;

/// Prefix -> predicted next token; the attacker's only view of the model.
using LmOracle = std::function<Token(const std::vector<Token>&)>;

/// Word pairs with non-zero LASSO weight from the embedding-attack
/// preparation on shadow data; at most `cap` of them.
struct CuratedPairs {
  std::string user_id;
  std::vector<std::pair<Token, Token>> pairs;
};

struct Hit {
  Token first;
  Token second;
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::size_t position = 0;  // index of the first word within the sentence
};

struct MembershipPrediction {
  bool member = false;
  std::vector<Hit> hits;
  std::size_t queries_used = 0;
};

struct CurationParams {
  std::size_t k = 16;
  std::size_t n_users = 6;
  embedding::EmbeddingParams emb;
  double lambda0 = 0.0;  // 0 = 1/sqrt(k)
  std::size_t cap = 50;
  std::uint64_t seed = 1;
  int jobs = 1;
};

/// Preparation phase: identical to the embedding attack, using only Word2Vec
/// shadow embeddings (never a shadow language model). An attack with no
/// selected pairs comes back empty and downstream probes answer non-member.
inline CuratedPairs curate_pairs(const UserDataset& user,
                                 const std::vector<UserDataset>& shadow,
                                 const CurationParams& params) {
  CuratedPairs out;
  out.user_id = user.user_id;
  embed_attack::PairList pairs;
  try {
    pairs = embed_attack::adjacent_pairs(user);
  } catch (const EmptySignalError&) {
    return out;
  }
  auto ensemble = embed_attack::train_shadows(user, shadow, params.k, params.emb,
                                              params.n_users, std::nullopt,
                                              params.seed, params.jobs);
  auto attack =
      embed_attack::fit_attack(ensemble, pairs, params.lambda0, params.cap);
  for (const auto& [j, w] : attack.model.weights)
    out.pairs.push_back(pairs.pairs[static_cast<std::size_t>(j)]);
  return out;
}

namespace detail {

// Probes every occurrence site of (first, second) across the user's
// sentences: positions j with s[j] = first and s[j+1] = second, querying the
// oracle on s[0..j]. Returns after the first hit when short_circuit is set.
template <typename OnHit>
inline bool probe_pair(const LmOracle& oracle,
                       const std::vector<lm::Sentence>& sentences,
                       const Token& first, const Token& second,
                       bool short_circuit, std::size_t& queries, OnHit&& on_hit) {
  bool satisfied = false;
  for (const auto& s : sentences) {
    for (std::size_t j = 0; j + 1 < s.tokens.size(); ++j) {
      if (s.tokens[j] != first || s.tokens[j + 1] != second) continue;
      std::vector<Token> prefix(s.tokens.begin(),
                                s.tokens.begin() + static_cast<std::ptrdiff_t>(j + 1));
      ++queries;
      if (oracle(prefix) == second) {
        if (!satisfied) on_hit(Hit{first, second, s.doc_id, s.index, j});
        satisfied = true;
        if (short_circuit) return true;
      }
    }
  }
  return satisfied;
}

}  // namespace detail

/// Any-hit attack: member as soon as one curated pair occurrence is
/// predicted by the oracle (short-circuits on the first hit).
inline MembershipPrediction attack_user(const LmOracle& oracle,
                                        const UserDataset& user,
                                        const CuratedPairs& pairs) {
  MembershipPrediction pred;
  if (pairs.pairs.empty()) return pred;
  auto sentences = lm::sentences_of(user);
  for (const auto& [a, b] : pairs.pairs) {
    bool hit = detail::probe_pair(oracle, sentences, a, b, /*short_circuit=*/true,
                                  pred.queries_used,
                                  [&](Hit h) { pred.hits.push_back(std::move(h)); });
    if (hit) {
      pred.member = true;
      return pred;
    }
  }
  return pred;
}

/// Threshold variant: evaluates every pair (no short-circuit), counts
/// satisfied pairs, and predicts member iff count/|pairs| > t. With t = 0
/// the decision coincides with the any-hit attack on the same pair set.
inline MembershipPrediction attack_user_threshold(const LmOracle& oracle,
                                                  const UserDataset& user,
                                                  const CuratedPairs& pairs,
                                                  double t) {
  MembershipPrediction pred;
  if (pairs.pairs.empty()) return pred;
  auto sentences = lm::sentences_of(user);
  std::size_t satisfied = 0;
  for (const auto& [a, b] : pairs.pairs) {
    if (detail::probe_pair(oracle, sentences, a, b, /*short_circuit=*/false,
                           pred.queries_used,
                           [&](Hit h) { pred.hits.push_back(std::move(h)); }))
      ++satisfied;
  }
  double average =
      static_cast<double>(satisfied) / static_cast<double>(pairs.pairs.size());
  pred.member = average > t;
  return pred;
}

enum class BaselineMode { kAllPairs, kDictFiltered };

/// Baseline 1 probes every adjacent pair of the user's data; Baseline 2
/// first drops pairs whose words are BOTH in the common-word set. Baselines
/// evaluate every occurrence (no short-circuit) so their query counts
/// reflect the full uncurated probe cost.
inline MembershipPrediction baselines(const LmOracle& oracle,
                                      const UserDataset& user, BaselineMode mode,
                                      const WordSet& common_words = {}) {
  MembershipPrediction pred;
  embed_attack::PairList all;
  try {
    all = embed_attack::adjacent_pairs(user);
  } catch (const EmptySignalError&) {
    return pred;
  }
  std::vector<std::pair<Token, Token>> use;
  for (const auto& pr : all.pairs) {
    if (mode == BaselineMode::kDictFiltered && common_words.count(pr.first) &&
        common_words.count(pr.second))
      continue;
    use.push_back(pr);
  }
  auto sentences = lm::sentences_of(user);
  for (const auto& [a, b] : use) {
    if (detail::probe_pair(oracle, sentences, a, b, /*short_circuit=*/false,
                           pred.queries_used,
                           [&](Hit h) { pred.hits.push_back(std::move(h)); }))
      pred.member = true;
  }
  return pred;
}

/// Per-user attack trace: pairs tried, hit locations, queries used.
inline nlohmann::json to_json(const CuratedPairs& pairs,
                              const MembershipPrediction& pred) {
  nlohmann::json pj = nlohmann::json::array();
  for (const auto& [a, b] : pairs.pairs) pj.push_back({a, b});
  nlohmann::json hj = nlohmann::json::array();
  for (const auto& h : pred.hits)
    hj.push_back({{"first", h.first},
                  {"second", h.second},
                  {"doc", h.doc_id},
                  {"sentence", h.sentence_index},
                  {"position", h.position}});
  return {{"user", pairs.user_id},
          {"pairs", std::move(pj)},
          {"member", pred.member},
          {"hits", std::move(hj)},
          {"queries_used", pred.queries_used}};
}

}  // namespace milab::lm_attack
