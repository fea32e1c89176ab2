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
// Word-embedding trainer: skip-gram with negative sampling, single-threaded
// and bit-deterministic under a fixed seed, plus the black-box lookup oracle
// and a text serialization format.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "milab/corpus.hpp"
#include "milab/error.hpp"
#include "milab/numio.hpp"
#include "milab/rng.hpp"

namespace milab::embedding {

using corpus::Token;
using corpus::UserDataset;
using corpus::Vocabulary;

struct EmbeddingParams {
  int dim = 80;
  int window = 5;
  int epochs = 20;
  int min_count = 20;
  int negatives = 5;
  double lr_start = 0.025;
  double lr_end = 1e-4;
  std::uint64_t seed = 1;

  void validate() const {
    if (dim < 1 || window < 1 || epochs < 1 || negatives < 0 || min_count < 0)
      throw ConfigError("embedding params out of range");
  }
};

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(Vocabulary vocab, int dim, EmbeddingParams params)
      : vocab_(std::move(vocab)),
        dim_(dim),
        params_(params),
        vectors_(static_cast<std::size_t>(vocab_.size()) * dim, 0.0) {}

  const Vocabulary& vocab() const { return vocab_; }
  int dim() const { return dim_; }
  const EmbeddingParams& params() const { return params_; }
  const std::vector<double>& raw_vectors() const { return vectors_; }

  std::span<double> row(int i) {
    return {vectors_.data() + static_cast<std::size_t>(i) * dim_,
            static_cast<std::size_t>(dim_)};
  }
  std::span<const double> row(int i) const {
    return {vectors_.data() + static_cast<std::size_t>(i) * dim_,
            static_cast<std::size_t>(dim_)};
  }

  /// Black-box lookup: the stored row for in-vocab words, missing otherwise.
  std::optional<std::span<const double>> lookup(const Token& word) const {
    auto idx = vocab_.index_of(word);
    if (!idx) return std::nullopt;
    return row(*idx);
  }

  bool operator==(const EmbeddingModel& o) const {
    return dim_ == o.dim_ && vocab_ == o.vocab_ && vectors_ == o.vectors_;
  }

 private:
  Vocabulary vocab_;
  int dim_ = 0;
  EmbeddingParams params_;
  std::vector<double> vectors_;
};

/// L2 distance between the two words' vectors; missing if either is absent.
inline std::optional<double> pair_distance(const EmbeddingModel& model,
                                           const Token& w1, const Token& w2) {
  auto a = model.lookup(w1);
  auto b = model.lookup(w2);
  if (!a || !b) return std::nullopt;
  double s = 0.0;
  for (std::size_t i = 0; i < a->size(); ++i) {
    double d = (*a)[i] - (*b)[i];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Cumulative unigram^0.75 table over trainable words; negatives are drawn by
// binary search, which keeps per-model setup cheap for large shadow
// ensembles.
struct NegativeTable {
  std::vector<int> words;
  std::vector<double> cum;

  int draw(Rng& rng) const {
    double u = rng.uniform() * cum.back();
    auto it = std::lower_bound(cum.begin(), cum.end(), u);
    return words[static_cast<std::size_t>(it - cum.begin())];
  }
};

}  // namespace detail

/// Trains skip-gram with negative sampling. Windows never cross document
/// boundaries; the per-center window radius is the standard reduced draw in
/// {1..window}. Words whose frequency in the *training text* is below
/// min_count are skipped entirely (their vectors stay at init) even when the
/// vocabulary was built from a larger corpus.
inline EmbeddingModel train_w2v(const std::vector<UserDataset>& datasets,
                                const Vocabulary& vocab,
                                const EmbeddingParams& params) {
  params.validate();
  EmbeddingModel model(vocab, params.dim, params);
  Rng rng = derive_stream(params.seed, 0);

  // Input vectors uniform(-0.5/d, 0.5/d); context (output) vectors zero.
  // Init order is vocab order so untrained rows are reproducible.
  const double half = 0.5 / static_cast<double>(params.dim);
  for (int w = 0; w < model.vocab().size(); ++w)
    for (double& v : model.row(w)) v = rng.uniform(-half, half);
  std::vector<double> context(
      static_cast<std::size_t>(vocab.size()) * params.dim, 0.0);

  // Frequency of each vocab word in the training text.
  std::vector<std::uint64_t> train_freq(static_cast<std::size_t>(vocab.size()), 0);
  for (const auto& ds : datasets)
    for (const auto& doc : ds.documents)
      for (const auto& t : doc.tokens)
        if (auto idx = vocab.index_of(t)) ++train_freq[static_cast<std::size_t>(*idx)];

  detail::NegativeTable neg;
  std::uint64_t total_tokens = 0;
  double cum = 0.0;
  for (int w = 0; w < vocab.size(); ++w) {
    std::uint64_t f = train_freq[static_cast<std::size_t>(w)];
    if (f < static_cast<std::uint64_t>(params.min_count)) continue;
    total_tokens += f;
    cum += std::pow(static_cast<double>(f), 0.75);
    neg.words.push_back(w);
    neg.cum.push_back(cum);
  }
  if (total_tokens == 0)
    throw DegenerateDataError("train_w2v: no trainable tokens");

  const int dim = params.dim;
  std::vector<double> grad(static_cast<std::size_t>(dim));
  const double total_updates =
      static_cast<double>(params.epochs) * static_cast<double>(total_tokens);
  std::uint64_t processed = 0;
  std::vector<int> sent;

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    for (const auto& ds : datasets) {
      for (const auto& doc : ds.documents) {
        sent.clear();
        for (const auto& t : doc.tokens) {
          auto idx = vocab.index_of(t);
          if (!idx) continue;
          if (train_freq[static_cast<std::size_t>(*idx)] <
              static_cast<std::uint64_t>(params.min_count))
            continue;
          sent.push_back(*idx);
        }
        const int len = static_cast<int>(sent.size());
        for (int pos = 0; pos < len; ++pos) {
          double lr = params.lr_start +
                      (params.lr_end - params.lr_start) *
                          (static_cast<double>(processed) / total_updates);
          ++processed;
          const int center = sent[static_cast<std::size_t>(pos)];
          const int radius =
              1 + static_cast<int>(rng.uniform_int(
                      static_cast<std::uint64_t>(params.window)));
          for (int off = -radius; off <= radius; ++off) {
            if (off == 0) continue;
            int cpos = pos + off;
            if (cpos < 0 || cpos >= len) continue;
            const int ctx = sent[static_cast<std::size_t>(cpos)];
            auto in_vec = model.row(ctx);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (int k = 0; k <= params.negatives; ++k) {
              int target;
              double label;
              if (k == 0) {
                target = center;
                label = 1.0;
              } else {
                target = neg.draw(rng);
                if (target == center) continue;
                label = 0.0;
              }
              double* out_vec =
                  context.data() + static_cast<std::size_t>(target) * dim;
              double f = 0.0;
              for (int j = 0; j < dim; ++j) f += in_vec[j] * out_vec[j];
              double g = (label - detail::sigmoid(f)) * lr;
              for (int j = 0; j < dim; ++j) {
                grad[static_cast<std::size_t>(j)] += g * out_vec[j];
                out_vec[j] += g * in_vec[j];
              }
            }
            for (int j = 0; j < dim; ++j)
              in_vec[j] += grad[static_cast<std::size_t>(j)];
          }
        }
      }
    }
#ifndef NDEBUG
    for (double v : model.raw_vectors())
      milab::detail::check(std::isfinite(v), "non-finite embedding after epoch");
#endif
  }
  return model;
}

// ---------------------------------------------------------------------------
// Text model format: "EMB 1 <|V|> <d>" header, one "<word> <f1> ... <fd>"
// line per word. Shortest round-trip decimal formatting keeps save/load
// bit-exact.

inline void save(const EmbeddingModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding file: " + path.string());
  out << "EMB 1 " << model.vocab().size() << ' ' << model.dim() << '\n';
  for (int w = 0; w < model.vocab().size(); ++w) {
    out << model.vocab().word_at(w);
    for (double v : model.row(w)) out << ' ' << format_double(v);
    out << '\n';
  }
}

inline EmbeddingModel load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError("empty embedding file");
  std::istringstream hs(header);
  std::string magic;
  int version = 0, vsize = 0, dim = 0;
  hs >> magic >> version >> vsize >> dim;
  if (magic != "EMB" || hs.fail())
    throw FormatError("bad embedding header: '" + header + "'");
  if (version != 1)
    throw FormatError("unsupported embedding version " + std::to_string(version));
  if (vsize < 0 || dim < 1) throw FormatError("bad embedding dimensions");

  std::vector<Token> words;
  std::vector<std::vector<double>> rows;
  std::string line;
  for (int r = 0; r < vsize; ++r) {
    if (!std::getline(in, line))
      throw FormatError("embedding row " + std::to_string(r + 1) + ": missing");
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> vec;
    vec.reserve(static_cast<std::size_t>(dim));
    std::string num;
    while (ls >> num)
      vec.push_back(parse_double(num, "embedding row " + std::to_string(r + 1)));
    if (static_cast<int>(vec.size()) != dim)
      throw FormatError("embedding row " + std::to_string(r + 1) + ": expected " +
                        std::to_string(dim) + " values, got " +
                        std::to_string(vec.size()));
    words.push_back(std::move(word));
    rows.push_back(std::move(vec));
  }

  EmbeddingParams params;
  params.dim = dim;
  EmbeddingModel model(Vocabulary::from_words(std::move(words)), dim, params);
  for (int w = 0; w < model.vocab().size(); ++w) {
    auto dst = model.row(w);
    for (int j = 0; j < dim; ++j)
      dst[static_cast<std::size_t>(j)] = rows[static_cast<std::size_t>(w)]
                                             [static_cast<std::size_t>(j)];
  }
  return model;
}

}  // namespace milab::embedding
