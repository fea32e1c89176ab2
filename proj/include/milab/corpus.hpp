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
// Corpus ingestion, preprocessing, vocabulary construction, user-level
// partitioning, and a synthetic corpus generator with planted co-occurrence
// signals for desk-scale experiments.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "milab/error.hpp"
#include "milab/rng.hpp"

namespace milab::corpus {

using Token = std::string;
using WordSet = std::unordered_set<std::string>;

/// Reserved dummy word replacing out-of-dictionary tokens. The tokenizer
/// recognizes the literal "<unk>" in raw text as this token, so preprocessed
/// corpora survive a JSONL round trip; no dictionary word can contain '<'.
inline const Token kUnknownToken = "<unk>";

struct Document {
  std::string doc_id;
  std::vector<Token> tokens;
  std::optional<int> label;  // 1 = spam, 0 = not spam
  // Start offsets of the second and later sentences (first sentence starts
  // at 0). Populated from newline / sentence-final punctuation when the raw
  // text is available; empty means a single sentence.
  std::vector<std::size_t> sentence_breaks;
};

struct UserDataset {
  std::string user_id;
  std::vector<Document> documents;

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.tokens.size();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Tokenization

inline bool is_word_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9');
}

/// Splits on any non-alphanumeric byte and lowercases A-Z. Locale-free:
/// bytes outside ASCII alphanumerics (including UTF-8 multibyte sequences)
/// act as separators. The literal "<unk>" is kept as one token.
inline std::vector<Token> tokenize_text(std::string_view text) {
  std::vector<Token> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == '<' && text.substr(i, kUnknownToken.size()) == kUnknownToken) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      out.push_back(kUnknownToken);
      i += kUnknownToken.size() - 1;
      continue;
    }
    if (is_word_char(c)) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                         : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Tokenizes raw text and records sentence boundaries at newline and
/// sentence-final punctuation.
inline void tokenize_document(std::string_view text, Document& doc) {
  doc.tokens.clear();
  doc.sentence_breaks.clear();
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    auto toks = tokenize_text(text.substr(start, end - start));
    if (!toks.empty()) {
      if (!doc.tokens.empty()) doc.sentence_breaks.push_back(doc.tokens.size());
      doc.tokens.insert(doc.tokens.end(), toks.begin(), toks.end());
    }
    start = end + 1;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\n' || c == '.' || c == '!' || c == '?') flush(i);
  }
  flush(text.size());
}

// ---------------------------------------------------------------------------
// Vocabulary

struct VocabPolicy {
  enum class Kind { kMinCount, kTopK };
  Kind kind = Kind::kMinCount;
  long long value = 1;

  static VocabPolicy min_count(long long v) { return {Kind::kMinCount, v}; }
  static VocabPolicy top_k(long long v) { return {Kind::kTopK, v}; }
};

/// Word -> contiguous index plus corpus frequency. The dummy token is always
/// present at index 0; remaining words are ordered by (frequency desc, word
/// asc) so indices are deterministic and frequency-ranked.
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary from_entries(std::vector<std::pair<Token, std::uint64_t>> entries,
                                 VocabPolicy policy) {
    Vocabulary v;
    v.policy_ = policy;
    v.words_.reserve(entries.size());
    for (auto& [w, f] : entries) {
      v.index_.emplace(w, static_cast<int>(v.words_.size()));
      v.words_.push_back(std::move(w));
      v.freqs_.push_back(f);
    }
    return v;
  }

  /// Vocabulary in file order with unknown frequencies (model loading).
  static Vocabulary from_words(std::vector<Token> words) {
    std::vector<std::pair<Token, std::uint64_t>> entries;
    entries.reserve(words.size());
    for (auto& w : words) entries.emplace_back(std::move(w), 0);
    return from_entries(std::move(entries), VocabPolicy::min_count(1));
  }

  int size() const { return static_cast<int>(words_.size()); }
  bool contains(const Token& w) const { return index_.count(w) != 0; }

  std::optional<int> index_of(const Token& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Token& word_at(int i) const { return words_[static_cast<std::size_t>(i)]; }
  std::uint64_t freq_at(int i) const { return freqs_[static_cast<std::size_t>(i)]; }
  const VocabPolicy& policy() const { return policy_; }

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  std::vector<Token> words_;
  std::vector<std::uint64_t> freqs_;
  std::unordered_map<Token, int> index_;
  VocabPolicy policy_;
};

namespace detail {

inline std::unordered_map<Token, std::uint64_t> count_tokens(
    const std::vector<UserDataset>& datasets) {
  std::unordered_map<Token, std::uint64_t> freq;
  for (const auto& ds : datasets)
    for (const auto& doc : ds.documents)
      for (const auto& t : doc.tokens) ++freq[t];
  return freq;
}

// (frequency desc, word asc); total order so vocabulary indices and top-k
// selections are reproducible.
inline bool freq_order(const std::pair<Token, std::uint64_t>& a,
                       const std::pair<Token, std::uint64_t>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

}  // namespace detail

inline Vocabulary build_vocab(const std::vector<UserDataset>& datasets,
                              VocabPolicy policy) {
  if (datasets.empty()) throw EmptyCorpusError("build_vocab: no datasets");
  if (policy.value <= 0)
    throw ConfigError("build_vocab: policy value must be positive");

  auto freq = detail::count_tokens(datasets);
  std::uint64_t unk_freq = 0;
  if (auto it = freq.find(kUnknownToken); it != freq.end()) {
    unk_freq = it->second;
    freq.erase(it);
  }

  std::vector<std::pair<Token, std::uint64_t>> sorted(freq.begin(), freq.end());
  std::sort(sorted.begin(), sorted.end(), detail::freq_order);

  std::vector<std::pair<Token, std::uint64_t>> kept;
  kept.emplace_back(kUnknownToken, unk_freq);
  if (policy.kind == VocabPolicy::Kind::kMinCount) {
    for (auto& e : sorted)
      if (e.second >= static_cast<std::uint64_t>(policy.value))
        kept.push_back(std::move(e));
  } else {
    for (std::size_t i = 0;
         i < sorted.size() && i < static_cast<std::size_t>(policy.value); ++i)
      kept.push_back(std::move(sorted[i]));
  }
  return Vocabulary::from_entries(std::move(kept), policy);
}

/// Top-n tokens of a reference corpus by (frequency desc, word asc); the
/// desk substitute for a public common-word dictionary.
inline WordSet top_frequent_words(const std::vector<UserDataset>& datasets,
                                  std::size_t n) {
  auto freq = detail::count_tokens(datasets);
  std::vector<std::pair<Token, std::uint64_t>> sorted(freq.begin(), freq.end());
  std::sort(sorted.begin(), sorted.end(), detail::freq_order);
  WordSet out;
  for (std::size_t i = 0; i < sorted.size() && i < n; ++i)
    out.insert(sorted[i].first);
  return out;
}

// ---------------------------------------------------------------------------
// JSONL ingestion & mail-directory conversion

struct IngestStats {
  std::size_t records = 0;
  std::size_t dropped_empty_docs = 0;
};

/// One document per line: {"user": str, "doc": str, "label": 0|1?, "text": str}.
/// Records are grouped by user id preserving file order.
inline std::vector<UserDataset> ingest_jsonl(const std::filesystem::path& path,
                                             IngestStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path.string());

  std::vector<UserDataset> out;
  std::unordered_map<std::string, std::size_t> user_slot;
  IngestStats local;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto need_string = [&](const char* key) -> std::string {
      if (!rec.contains(key) || !rec[key].is_string())
        throw ParseError("line " + std::to_string(line_no) +
                         ": missing or non-string field '" + key + "'");
      return rec[key].get<std::string>();
    };
    std::string user = need_string("user");
    std::string doc_id = need_string("doc");
    std::string text = need_string("text");

    Document doc;
    doc.doc_id = std::move(doc_id);
    if (rec.contains("label")) {
      if (!rec["label"].is_number_integer() ||
          (rec["label"].get<int>() != 0 && rec["label"].get<int>() != 1))
        throw ParseError("line " + std::to_string(line_no) +
                         ": field 'label' must be 0 or 1");
      doc.label = rec["label"].get<int>();
    }
    tokenize_document(text, doc);
    ++local.records;
    if (doc.tokens.empty()) {
      ++local.dropped_empty_docs;
      continue;
    }
    auto [it, inserted] = user_slot.emplace(user, out.size());
    if (inserted) out.push_back(UserDataset{user, {}});
    out[it->second].documents.push_back(std::move(doc));
  }
  if (local.records == 0) throw EmptyCorpusError("no records in " + path.string());
  if (stats) *stats = local;
  return out;
}

/// Serializes datasets back to the JSONL corpus format. Sentence boundaries
/// are rendered as " . " so a re-ingest reproduces tokens and breaks.
inline void write_jsonl(const std::vector<UserDataset>& datasets,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file: " + path.string());
  for (const auto& ds : datasets) {
    for (const auto& doc : ds.documents) {
      std::string text;
      std::size_t next_break = 0;
      for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
        if (next_break < doc.sentence_breaks.size() &&
            doc.sentence_breaks[next_break] == i) {
          text += ". ";
          ++next_break;
        }
        text += doc.tokens[i];
        if (i + 1 < doc.tokens.size()) text += ' ';
      }
      nlohmann::json rec{{"user", ds.user_id}, {"doc", doc.doc_id}, {"text", text}};
      if (doc.label) rec["label"] = *doc.label;
      out << rec.dump() << '\n';
    }
  }
}

/// Converts a directory tree of plain-text email files (one file = one
/// document, parent directory name = user id) to the JSONL corpus format.
/// Files are visited in sorted path order so output is deterministic.
inline std::size_t convert_mail_tree(const std::filesystem::path& root,
                                     const std::filesystem::path& out_jsonl) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw IoError("not a directory: " + root.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::ofstream out(out_jsonl);
  if (!out) throw IoError("cannot write corpus file: " + out_jsonl.string());
  std::size_t n = 0;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    nlohmann::json rec{{"user", f.parent_path().filename().string()},
                       {"doc", f.filename().string()},
                       {"text", text.str()}};
    out << rec.dump() << '\n';
    ++n;
  }
  if (n == 0) throw EmptyCorpusError("no files under " + root.string());
  return n;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessStats {
  std::size_t replaced_tokens = 0;
  std::size_t dropped_documents = 0;
  std::size_t dropped_users = 0;
};

/// Replaces every token not in `dictionary` with the dummy token. Idempotent;
/// empty documents (and then empty users) are dropped with a counter.
inline std::vector<UserDataset> preprocess(const std::vector<UserDataset>& datasets,
                                           const WordSet& dictionary,
                                           PreprocessStats* stats = nullptr) {
  if (dictionary.empty()) throw ConfigError("preprocess: empty dictionary");
  PreprocessStats local;
  std::vector<UserDataset> out;
  out.reserve(datasets.size());
  for (const auto& ds : datasets) {
    UserDataset nds{ds.user_id, {}};
    for (const auto& doc : ds.documents) {
      if (doc.tokens.empty()) {
        ++local.dropped_documents;
        continue;
      }
      Document nd = doc;
      for (auto& t : nd.tokens) {
        if (t != kUnknownToken && dictionary.count(t) == 0) {
          t = kUnknownToken;
          ++local.replaced_tokens;
        }
      }
      nds.documents.push_back(std::move(nd));
    }
    if (nds.documents.empty()) {
      ++local.dropped_users;
      continue;
    }
    out.push_back(std::move(nds));
  }
  if (stats) *stats = local;
  return out;
}

// ---------------------------------------------------------------------------
// Partitioning & subsampling

struct CorpusPartition {
  std::vector<UserDataset> shadow;
  std::vector<UserDataset> target_in;
  std::vector<UserDataset> target_out;
};

inline CorpusPartition split_partition(const std::vector<UserDataset>& datasets,
                                       std::size_t shadow_n, std::size_t in_n,
                                       std::size_t out_n, std::uint64_t seed) {
  if (shadow_n + in_n + out_n > datasets.size())
    throw SizeError("split_partition: need " +
                    std::to_string(shadow_n + in_n + out_n) + " users, have " +
                    std::to_string(datasets.size()));
  std::vector<std::size_t> order(datasets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = derive_stream(seed, 0);
  rng.shuffle(order);

  CorpusPartition part;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < shadow_n; ++i) part.shadow.push_back(datasets[order[pos++]]);
  for (std::size_t i = 0; i < in_n; ++i) part.target_in.push_back(datasets[order[pos++]]);
  for (std::size_t i = 0; i < out_n; ++i) part.target_out.push_back(datasets[order[pos++]]);

  // Disjointness is part of the contract; verify exhaustively.
  WordSet seen;
  for (const auto* group : {&part.shadow, &part.target_in, &part.target_out})
    for (const auto& ds : *group)
      if (!seen.insert(ds.user_id).second)
        throw SizeError("split_partition: duplicate user id '" + ds.user_id + "'");
  return part;
}

/// Keeps each document independently with probability `fraction` (seeded),
/// preserving order. The result may be empty.
inline UserDataset subsample_user(const UserDataset& dataset, double fraction,
                                  std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ConfigError("subsample_user: fraction must be in (0, 1]");
  Rng rng = derive_stream(seed, 0);
  UserDataset out{dataset.user_id, {}};
  for (const auto& doc : dataset.documents)
    if (rng.bernoulli(fraction)) out.documents.push_back(doc);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus with planted co-occurrence signals

struct SynthSpec {
  long long vocab_size = 500;
  long long users = 20;
  long long docs_per_user = 10;
  long long doc_len = 50;
  long long planted_pairs_per_user = 2;
  double planting_rate = 0.9;
  long long spam_topic_size = 0;
  std::uint64_t seed = 1;

  void validate() const {
    if (planting_rate < 0.0 || planting_rate > 1.0)
      throw ConfigError("synth: planting_rate must be in [0, 1]");
    if (vocab_size <= 2 * planted_pairs_per_user * users)
      throw ConfigError("synth: vocab_size must exceed 2*pairs*users");
    if (users < 1 || docs_per_user < 1 || doc_len < 1 ||
        planted_pairs_per_user < 0 || spam_topic_size < 0)
      throw ConfigError("synth: counts must be positive");
    if (2 * planted_pairs_per_user * users + spam_topic_size >= vocab_size)
      throw ConfigError("synth: no background words left");
  }
};

namespace detail {

// Probability of drawing one of the user's planted first-words on a free
// (non-planting) draw.
inline constexpr double kPlantedFirstWordMixture = 0.08;
// Fraction of a spam-labeled document's background drawn from the spam topic.
inline constexpr double kSpamTopicMixture = 0.5;
inline constexpr double kZipfExponent = 1.05;

struct SynthLayout {
  long long reserved;    // [0, reserved): per-user planted words
  long long spam_begin;  // [spam_begin, bg_begin): spam topic
  long long bg_begin;    // [bg_begin, vocab_size): shared background
  std::vector<double> bg_cum;

  explicit SynthLayout(const SynthSpec& spec) {
    reserved = 2 * spec.planted_pairs_per_user * spec.users;
    spam_begin = reserved;
    bg_begin = reserved + spec.spam_topic_size;
    long long bg = spec.vocab_size - bg_begin;
    bg_cum.resize(static_cast<std::size_t>(bg));
    double total = 0.0;
    for (long long r = 0; r < bg; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), kZipfExponent);
      bg_cum[static_cast<std::size_t>(r)] = total;
    }
  }

  long long draw_background(Rng& rng) const {
    double u = rng.uniform() * bg_cum.back();
    auto it = std::lower_bound(bg_cum.begin(), bg_cum.end(), u);
    return bg_begin + (it - bg_cum.begin());
  }
};

inline Token synth_word(long long index) { return "w" + std::to_string(index); }

}  // namespace detail

/// Generates one synthetic user (documents only). Exposed separately so a
/// driver can regenerate a specific user with a different document count
/// while keeping the same private planted words and RNG stream.
inline UserDataset synth_user(const SynthSpec& spec, long long user_index,
                              long long doc_count) {
  spec.validate();
  if (user_index < 0 || user_index >= spec.users)
    throw ConfigError("synth_user: user_index out of range");
  detail::SynthLayout layout(spec);

  const long long pairs = spec.planted_pairs_per_user;
  const long long base = 2 * pairs * user_index;
  auto first_word_index = [&](long long j) { return base + 2 * j; };
  auto second_word_index = [&](long long j) { return base + 2 * j + 1; };

  Rng rng = derive_stream(spec.seed, static_cast<std::uint64_t>(user_index));
  UserDataset ds;
  ds.user_id = "user" + std::to_string(user_index);
  for (long long di = 0; di < doc_count; ++di) {
    Document doc;
    doc.doc_id = ds.user_id + "_d" + std::to_string(di);
    bool spam = spec.spam_topic_size > 0 && (di % 2 == 1);
    if (spec.spam_topic_size > 0) doc.label = spam ? 1 : 0;
    doc.tokens.reserve(static_cast<std::size_t>(spec.doc_len));
    long long pending_pair = -1;  // planted first-word emitted at previous pos
    for (long long pos = 0; pos < spec.doc_len; ++pos) {
      long long widx;
      if (pending_pair >= 0 && rng.bernoulli(spec.planting_rate)) {
        widx = second_word_index(pending_pair);
        pending_pair = -1;
      } else {
        pending_pair = -1;
        bool last = pos + 1 == spec.doc_len;
        if (pairs > 0 && !last &&
            rng.bernoulli(detail::kPlantedFirstWordMixture)) {
          long long j = static_cast<long long>(rng.uniform_int(
              static_cast<std::uint64_t>(pairs)));
          widx = first_word_index(j);
          pending_pair = j;
        } else if (spam && rng.bernoulli(detail::kSpamTopicMixture)) {
          widx = layout.spam_begin +
                 static_cast<long long>(rng.uniform_int(
                     static_cast<std::uint64_t>(spec.spam_topic_size)));
        } else {
          widx = layout.draw_background(rng);
        }
      }
      doc.tokens.push_back(detail::synth_word(widx));
    }
    ds.documents.push_back(std::move(doc));
  }
  return ds;
}

/// Full synthetic corpus: each user gets a private set of planted word pairs
/// whose second word immediately follows the first with probability
/// planting_rate; other tokens come from a shared Zipf background. With
/// spam_topic_size > 0, odd documents are labeled 1 and oversample the spam
/// topic. Deterministic function of (spec, seed).
inline std::vector<UserDataset> synth_corpus(const SynthSpec& spec) {
  spec.validate();
  std::vector<UserDataset> out;
  out.reserve(static_cast<std::size_t>(spec.users));
  for (long long u = 0; u < spec.users; ++u)
    out.push_back(synth_user(spec, u, spec.docs_per_user));
  return out;
}

/// Planted pairs of a synthetic user, in planting order (test & harness aid).
inline std::vector<std::pair<Token, Token>> synth_planted_pairs(
    const SynthSpec& spec, long long user_index) {
  std::vector<std::pair<Token, Token>> out;
  const long long base = 2 * spec.planted_pairs_per_user * user_index;
  for (long long j = 0; j < spec.planted_pairs_per_user; ++j)
    out.emplace_back(detail::synth_word(base + 2 * j),
                     detail::synth_word(base + 2 * j + 1));
  return out;
}

}  // namespace milab::corpus
