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
// Command-line entry point: config file handling (JSON, unknown keys
// rejected, flags override) and the subcommand dispatcher.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "milab/corpus.hpp"
#include "milab/embed_attack.hpp"
#include "milab/embedding.hpp"
#include "milab/error.hpp"
#include "milab/harness.hpp"
#include "milab/lm.hpp"
#include "milab/lm_attack.hpp"
#include "milab/numio.hpp"

namespace milab::cli {

// ---------------------------------------------------------------------------
// RunConfig

struct RunConfig {
  std::uint64_t master_seed = 1;
  int jobs = 0;  // 0 = MILAB_JOBS env or hardware concurrency
  corpus::SynthSpec synth;
  embedding::EmbeddingParams emb;
  lm::LMParams lm_params;
  // attack
  std::size_t k = 50;
  std::size_t attack_n_users = 0;
  double lambda0 = 0.0;
  std::size_t cap = 50;
  clf_attack::ClassifierParams classifier;
  // clf attack extras
  std::size_t n_query_docs = 30;
  int max_reps = 5;
  std::size_t clf_train_docs = 60;
  std::size_t clf_pool_users = 10;
  std::size_t rf_trees = 100;
  bool shared_data = false;
  // lm attack extras
  std::size_t curation_k = 12;
  std::size_t curation_users = 6;
  std::size_t common_top_n = 150;
  double lm_threshold = 0.0;
  // experiment block
  harness::ExperimentKind kind = harness::ExperimentKind::kEmbed;
  std::size_t n = 20;
  std::size_t target_size = 10;
  std::size_t repetitions = 40;
  std::size_t repeats_per_target = 1;
  std::size_t shadow_pool = 0;
  double subsample_fraction = 0.0;  // 0 = off
  bool adaptive = true;
  double proxy_swap_fraction = 0.2;
  int force_bit = -1;  // -1 = off

  int effective_jobs() const {
    if (jobs > 0) return jobs;
    if (const char* env = std::getenv("MILAB_JOBS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    return default_jobs();
  }

  harness::GameConfig game_config() const {
    harness::GameConfig g;
    g.kind = kind;
    g.n = n;
    g.k = k;
    g.target_size = target_size;
    g.repetitions = repetitions;
    g.repeats_per_target = repeats_per_target;
    if (subsample_fraction > 0.0) g.subsample_fraction = subsample_fraction;
    g.adaptive = adaptive;
    g.proxy_swap_fraction = proxy_swap_fraction;
    g.shadow_pool = shadow_pool;
    g.attack_n_users = attack_n_users;
    g.synth = synth;
    g.emb = emb;
    g.lambda0 = lambda0;
    g.cap = cap;
    g.clf.n_query_docs = n_query_docs;
    g.clf.max_reps = max_reps;
    g.clf.clf_train_docs = clf_train_docs;
    g.clf.clf_pool_users = clf_pool_users;
    g.clf.clf = classifier;
    g.clf.rf_trees = rf_trees;
    g.lm.model = lm_params;
    g.lm.curation_k = curation_k;
    g.lm.curation_users = curation_users;
    g.lm.common_top_n = common_top_n;
    if (force_bit >= 0) g.force_bit = force_bit;
    g.master_seed = master_seed;
    g.jobs = effective_jobs();
    return g;
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const char* where,
                           std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok)
      throw ConfigError(std::string("unknown config key '") + key + "' in " + where);
  }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

inline nlohmann::json synth_to_json(const corpus::SynthSpec& s) {
  return {{"vocab_size", s.vocab_size},
          {"users", s.users},
          {"docs_per_user", s.docs_per_user},
          {"doc_len", s.doc_len},
          {"planted_pairs_per_user", s.planted_pairs_per_user},
          {"planting_rate", s.planting_rate},
          {"spam_topic_size", s.spam_topic_size},
          {"seed", s.seed}};
}

inline corpus::SynthSpec synth_from_json(const nlohmann::json& j) {
  reject_unknown(j, "synth",
                 {"vocab_size", "users", "docs_per_user", "doc_len",
                  "planted_pairs_per_user", "planting_rate", "spam_topic_size",
                  "seed"});
  corpus::SynthSpec s;
  read_if(j, "vocab_size", s.vocab_size);
  read_if(j, "users", s.users);
  read_if(j, "docs_per_user", s.docs_per_user);
  read_if(j, "doc_len", s.doc_len);
  read_if(j, "planted_pairs_per_user", s.planted_pairs_per_user);
  read_if(j, "planting_rate", s.planting_rate);
  read_if(j, "spam_topic_size", s.spam_topic_size);
  read_if(j, "seed", s.seed);
  return s;
}

inline harness::ExperimentKind kind_from_string(const std::string& s) {
  using harness::ExperimentKind;
  if (s == "embed") return ExperimentKind::kEmbed;
  if (s == "embed-proxy") return ExperimentKind::kEmbedProxy;
  if (s == "embed-subsample") return ExperimentKind::kEmbedSubsample;
  if (s == "clf-separate") return ExperimentKind::kClfSeparate;
  if (s == "clf-shared") return ExperimentKind::kClfShared;
  if (s == "lm") return ExperimentKind::kLm;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

}  // namespace detail

inline nlohmann::json default_config_json() {
  RunConfig d;
  return {
      {"master_seed", d.master_seed},
      {"jobs", d.jobs},
      {"synth", detail::synth_to_json(d.synth)},
      {"embedding",
       {{"dim", d.emb.dim},
        {"window", d.emb.window},
        {"epochs", d.emb.epochs},
        {"min_count", d.emb.min_count},
        {"negatives", d.emb.negatives},
        {"lr_start", d.emb.lr_start},
        {"lr_end", d.emb.lr_end}}},
      {"lm",
       {{"layers", d.lm_params.layers},
        {"emb_dim", d.lm_params.emb_dim},
        {"hidden_dim", d.lm_params.hidden_dim},
        {"vocab_top_k", d.lm_params.vocab_top_k},
        {"lr", d.lm_params.lr},
        {"batch", d.lm_params.batch},
        {"bptt_len", d.lm_params.bptt_len},
        {"epochs", d.lm_params.epochs},
        {"grad_clip", d.lm_params.grad_clip}}},
      {"attack",
       {{"k", d.k},
        {"n_users", d.attack_n_users},
        {"lambda0", d.lambda0},
        {"cap", d.cap}}},
      {"classifier",
       {{"reg", d.classifier.reg},
        {"epochs", d.classifier.epochs},
        {"test_fraction", d.classifier.test_fraction}}},
      {"clf_attack",
       {{"n_query_docs", d.n_query_docs},
        {"max_reps", d.max_reps},
        {"clf_train_docs", d.clf_train_docs},
        {"clf_pool_users", d.clf_pool_users},
        {"rf_trees", d.rf_trees},
        {"shared_data", d.shared_data}}},
      {"lm_attack",
       {{"curation_k", d.curation_k},
        {"curation_users", d.curation_users},
        {"common_top_n", d.common_top_n},
        {"threshold", d.lm_threshold}}},
      {"experiment",
       {{"kind", harness::kind_name(d.kind)},
        {"n", d.n},
        {"target_size", d.target_size},
        {"repetitions", d.repetitions},
        {"repeats_per_target", d.repeats_per_target},
        {"shadow_pool", d.shadow_pool},
        {"subsample_fraction", d.subsample_fraction},
        {"adaptive", d.adaptive},
        {"proxy_swap_fraction", d.proxy_swap_fraction},
        {"force_bit", d.force_bit}}},
  };
}

/// Parses a RunConfig; master_seed is mandatory, unknown keys anywhere are
/// rejected.
inline RunConfig parse_config(const nlohmann::json& j) {
  detail::reject_unknown(j, "config",
                         {"master_seed", "jobs", "synth", "embedding", "lm",
                          "attack", "classifier", "clf_attack", "lm_attack",
                          "experiment"});
  if (!j.contains("master_seed"))
    throw ConfigError("config: master_seed is mandatory");
  RunConfig c;
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  detail::read_if(j, "jobs", c.jobs);
  if (j.contains("synth")) c.synth = detail::synth_from_json(j.at("synth"));
  if (j.contains("embedding")) {
    const auto& e = j.at("embedding");
    detail::reject_unknown(e, "embedding",
                           {"dim", "window", "epochs", "min_count", "negatives",
                            "lr_start", "lr_end"});
    detail::read_if(e, "dim", c.emb.dim);
    detail::read_if(e, "window", c.emb.window);
    detail::read_if(e, "epochs", c.emb.epochs);
    detail::read_if(e, "min_count", c.emb.min_count);
    detail::read_if(e, "negatives", c.emb.negatives);
    detail::read_if(e, "lr_start", c.emb.lr_start);
    detail::read_if(e, "lr_end", c.emb.lr_end);
  }
  if (j.contains("lm")) {
    const auto& e = j.at("lm");
    detail::reject_unknown(e, "lm",
                           {"layers", "emb_dim", "hidden_dim", "vocab_top_k",
                            "lr", "batch", "bptt_len", "epochs", "grad_clip"});
    detail::read_if(e, "layers", c.lm_params.layers);
    detail::read_if(e, "emb_dim", c.lm_params.emb_dim);
    detail::read_if(e, "hidden_dim", c.lm_params.hidden_dim);
    detail::read_if(e, "vocab_top_k", c.lm_params.vocab_top_k);
    detail::read_if(e, "lr", c.lm_params.lr);
    detail::read_if(e, "batch", c.lm_params.batch);
    detail::read_if(e, "bptt_len", c.lm_params.bptt_len);
    detail::read_if(e, "epochs", c.lm_params.epochs);
    detail::read_if(e, "grad_clip", c.lm_params.grad_clip);
  }
  if (j.contains("attack")) {
    const auto& e = j.at("attack");
    detail::reject_unknown(e, "attack", {"k", "n_users", "lambda0", "cap"});
    detail::read_if(e, "k", c.k);
    detail::read_if(e, "n_users", c.attack_n_users);
    detail::read_if(e, "lambda0", c.lambda0);
    detail::read_if(e, "cap", c.cap);
  }
  if (j.contains("classifier")) {
    const auto& e = j.at("classifier");
    detail::reject_unknown(e, "classifier", {"reg", "epochs", "test_fraction"});
    detail::read_if(e, "reg", c.classifier.reg);
    detail::read_if(e, "epochs", c.classifier.epochs);
    detail::read_if(e, "test_fraction", c.classifier.test_fraction);
  }
  if (j.contains("clf_attack")) {
    const auto& e = j.at("clf_attack");
    detail::reject_unknown(e, "clf_attack",
                           {"n_query_docs", "max_reps", "clf_train_docs",
                            "clf_pool_users", "rf_trees", "shared_data"});
    detail::read_if(e, "n_query_docs", c.n_query_docs);
    detail::read_if(e, "max_reps", c.max_reps);
    detail::read_if(e, "clf_train_docs", c.clf_train_docs);
    detail::read_if(e, "clf_pool_users", c.clf_pool_users);
    detail::read_if(e, "rf_trees", c.rf_trees);
    detail::read_if(e, "shared_data", c.shared_data);
  }
  if (j.contains("lm_attack")) {
    const auto& e = j.at("lm_attack");
    detail::reject_unknown(
        e, "lm_attack", {"curation_k", "curation_users", "common_top_n", "threshold"});
    detail::read_if(e, "curation_k", c.curation_k);
    detail::read_if(e, "curation_users", c.curation_users);
    detail::read_if(e, "common_top_n", c.common_top_n);
    detail::read_if(e, "threshold", c.lm_threshold);
  }
  if (j.contains("experiment")) {
    const auto& e = j.at("experiment");
    detail::reject_unknown(e, "experiment",
                           {"kind", "n", "target_size", "repetitions",
                            "repeats_per_target", "shadow_pool",
                            "subsample_fraction", "adaptive",
                            "proxy_swap_fraction", "force_bit"});
    if (e.contains("kind")) c.kind = detail::kind_from_string(e.at("kind"));
    detail::read_if(e, "n", c.n);
    detail::read_if(e, "target_size", c.target_size);
    detail::read_if(e, "repetitions", c.repetitions);
    detail::read_if(e, "repeats_per_target", c.repeats_per_target);
    detail::read_if(e, "shadow_pool", c.shadow_pool);
    detail::read_if(e, "subsample_fraction", c.subsample_fraction);
    detail::read_if(e, "adaptive", c.adaptive);
    detail::read_if(e, "proxy_swap_fraction", c.proxy_swap_fraction);
    detail::read_if(e, "force_bit", c.force_bit);
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Subcommand implementations

namespace detail {

inline corpus::WordSet load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dictionary: " + path.string());
  corpus::WordSet words;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = corpus::tokenize_text(line);
    for (auto& t : toks) words.insert(std::move(t));
  }
  if (words.empty()) throw ConfigError("dictionary is empty: " + path.string());
  return words;
}

}  // namespace detail

/// Pulls one user's datasets out of a corpus; the rest become shadow data.
inline std::pair<corpus::UserDataset, std::vector<corpus::UserDataset>>
split_target_user(std::vector<corpus::UserDataset> datasets,
                  const std::string& user_id) {
  std::optional<corpus::UserDataset> target;
  std::vector<corpus::UserDataset> rest;
  for (auto& ds : datasets) {
    if (ds.user_id == user_id)
      target = std::move(ds);
    else
      rest.push_back(std::move(ds));
  }
  if (!target) throw ConfigError("user '" + user_id + "' not found in corpus");
  return {std::move(*target), std::move(rest)};
}

namespace detail {

inline RunConfig config_from_flags(const std::string& config_path,
                                   std::uint64_t seed_override, bool seed_set,
                                   int jobs_override) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
  if (seed_set) cfg.master_seed = seed_override;
  if (jobs_override > 0) cfg.jobs = jobs_override;
  return cfg;
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline harness::ExperimentReport report_from_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open runs file: " + path.string());
  harness::ExperimentReport report;
  report.config_echo = {{"source", path.string()}};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty runs file");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 10)
      throw ParseError("runs.csv line " + std::to_string(line_no) +
                       ": expected 10 fields");
    harness::RunRecord r;
    r.experiment = fields[0];
    r.repetition = static_cast<std::size_t>(parse_int(fields[1], "repetition"));
    r.target_size = static_cast<std::size_t>(parse_int(fields[2], "target_size"));
    r.k = static_cast<std::size_t>(parse_int(fields[3], "k"));
    r.seed = static_cast<std::uint64_t>(parse_int(fields[4], "seed"));
    r.truth = static_cast<int>(parse_int(fields[5], "truth"));
    r.pred = static_cast<int>(parse_int(fields[6], "pred"));
    r.accuracy = parse_double(fields[7], "accuracy");
    if (!fields[8].empty()) r.precision = parse_double(fields[8], "precision");
    if (!fields[9].empty()) r.recall = parse_double(fields[9], "recall");
    report.runs.push_back(std::move(r));
  }
  return report;
}

}  // namespace detail

/// Subcommand dispatcher. Exit codes: 0 success, 1 usage error, 2 runtime
/// error.
inline int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"membership-inference laboratory"};
  app.require_subcommand(1);

  std::string config_path, in_path, out_path, dict_path, spec_path;
  std::string target_user, attack_path, model_path, shadow_path, clf_data_path;
  std::string runs_path, eval_path, report_path;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  int jobs_override = 0;
  double threshold = 0.0;
  bool threshold_set = false;
  std::string baseline_mode;

  auto add_common = [&](CLI::App* cmd, bool need_config) {
    auto* copt = cmd->add_option("--config", config_path, "JSON config file");
    if (need_config) copt->required();
    cmd->add_option("--seed", seed_override, "master seed override")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--jobs", jobs_override, "worker pool size");
  };

  auto* c_config = app.add_subcommand("config", "configuration helpers");
  c_config->require_subcommand(1);
  c_config->add_subcommand("print-defaults", "print the full default config");

  auto* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  c_synth->add_option("--spec", spec_path, "SynthSpec JSON file");
  c_synth->add_option("--out", out_path, "output corpus (JSONL)")->required();
  add_common(c_synth, false);

  auto* c_convert = app.add_subcommand(
      "convert", "convert a mail directory tree to the JSONL corpus format");
  c_convert->add_option("--in", in_path, "root directory")->required();
  c_convert->add_option("--out", out_path, "output corpus (JSONL)")->required();

  auto* c_ingest = app.add_subcommand("ingest", "validate and normalize a corpus");
  c_ingest->add_option("--in", in_path, "input corpus (JSONL)")->required();
  c_ingest->add_option("--out", out_path, "normalized output corpus");

  auto* c_pre = app.add_subcommand("preprocess",
                                   "replace out-of-dictionary words with the dummy token");
  c_pre->add_option("--in", in_path, "input corpus (JSONL)")->required();
  c_pre->add_option("--dict", dict_path, "dictionary word list")->required();
  c_pre->add_option("--out", out_path, "output corpus (JSONL)")->required();

  auto* c_temb = app.add_subcommand("train-embedding", "train a word embedding");
  c_temb->add_option("--in", in_path, "training corpus (JSONL)")->required();
  c_temb->add_option("--out", out_path, "output model file")->required();
  add_common(c_temb, false);

  auto* c_tlm = app.add_subcommand("train-lm", "train the LSTM language model");
  c_tlm->add_option("--in", in_path, "training corpus (JSONL)")->required();
  c_tlm->add_option("--out", out_path, "output checkpoint")->required();
  c_tlm->add_option("--eval", eval_path, "held-out corpus for test perplexity");
  c_tlm->add_option("--report", report_path, "perplexity report (JSON)");
  add_common(c_tlm, false);

  auto* c_ae = app.add_subcommand("attack-embed", "embedding membership attack");
  c_ae->require_subcommand(1);
  auto* c_ae_prep = c_ae->add_subcommand("prepare", "fit the sparse linear attack");
  c_ae_prep->add_option("--target-user", target_user, "target user id")->required();
  c_ae_prep->add_option("--corpus", in_path, "corpus with target + shadow users")
      ->required();
  c_ae_prep->add_option("--out", out_path, "attack artifact (JSON)")->required();
  add_common(c_ae_prep, false);
  auto* c_ae_inf = c_ae->add_subcommand("infer", "run the fitted attack on a model");
  c_ae_inf->add_option("--attack", attack_path, "attack artifact (JSON)")->required();
  c_ae_inf->add_option("--model", model_path, "target embedding model")->required();
  c_ae_inf->add_option("--out", out_path, "result JSON");

  auto* c_ac = app.add_subcommand("attack-clf", "classifier membership attack");
  c_ac->add_option("--target-user", target_user, "target user id")->required();
  c_ac->add_option("--corpus", in_path, "shadow corpus (JSONL)")->required();
  c_ac->add_option("--clf-data", clf_data_path, "labeled classifier corpus (JSONL)")
      ->required();
  c_ac->add_option("--target-model", model_path, "target embedding model")->required();
  c_ac->add_option("--out", out_path, "result JSON");
  add_common(c_ac, false);

  auto* c_al = app.add_subcommand("attack-lm", "language-model membership attack");
  c_al->add_option("--target-user", target_user, "target user id")->required();
  c_al->add_option("--corpus", in_path, "corpus holding the target user's data")
      ->required();
  c_al->add_option("--shadow", shadow_path, "shadow corpus (JSONL)")->required();
  c_al->add_option("--model", model_path, "language model checkpoint")->required();
  c_al->add_option("--out", out_path, "trace JSON");
  c_al->add_option("--threshold", threshold, "threshold variant")
      ->each([&](const std::string&) { threshold_set = true; });
  c_al->add_option("--baseline", baseline_mode,
                   "run a baseline instead: all-pairs | dict-filtered");
  add_common(c_al, false);

  auto* c_exp = app.add_subcommand("experiment", "run a security-game experiment");
  c_exp->require_subcommand(1);
  std::vector<std::string> exp_names = {"embed", "embed-proxy", "embed-subsample",
                                        "clf", "lm"};
  for (const auto& name : exp_names) {
    auto* sub = c_exp->add_subcommand(name, "experiment: " + name);
    sub->add_option("--out", out_path, "output directory")->required();
    add_common(sub, true);
  }

  auto* c_rep = app.add_subcommand("report", "re-emit plots and summary from runs.csv");
  c_rep->add_option("--runs", runs_path, "runs.csv from a previous experiment")
      ->required();
  c_rep->add_option("--out", out_path, "output directory")->required();

  std::vector<std::string> argv_store = args;
  argv_store.insert(argv_store.begin(), "milab");
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (c_config->parsed()) {
      std::cout << default_config_json().dump(2) << '\n';
      return 0;
    }
    if (c_synth->parsed()) {
      corpus::SynthSpec spec;
      if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        if (!in) throw IoError("cannot open spec: " + spec_path);
        nlohmann::json j;
        in >> j;
        spec = detail::synth_from_json(j);
      } else {
        spec = detail::config_from_flags(config_path, 0, false, 0).synth;
      }
      if (seed_set) spec.seed = seed_override;
      corpus::write_jsonl(corpus::synth_corpus(spec), out_path);
      std::cout << "wrote " << out_path << '\n';
      return 0;
    }
    if (c_convert->parsed()) {
      std::size_t n = corpus::convert_mail_tree(in_path, out_path);
      std::cout << "converted " << n << " documents\n";
      return 0;
    }
    if (c_ingest->parsed()) {
      corpus::IngestStats stats;
      auto datasets = corpus::ingest_jsonl(in_path, &stats);
      if (!out_path.empty()) corpus::write_jsonl(datasets, out_path);
      nlohmann::json j{{"users", datasets.size()},
                       {"records", stats.records},
                       {"dropped_empty_docs", stats.dropped_empty_docs}};
      std::cout << j.dump() << '\n';
      return 0;
    }
    if (c_pre->parsed()) {
      auto datasets = corpus::ingest_jsonl(in_path);
      corpus::PreprocessStats stats;
      auto out = corpus::preprocess(datasets, detail::load_dictionary(dict_path), &stats);
      corpus::write_jsonl(out, out_path);
      nlohmann::json j{{"replaced_tokens", stats.replaced_tokens},
                       {"dropped_documents", stats.dropped_documents},
                       {"dropped_users", stats.dropped_users}};
      std::cout << j.dump() << '\n';
      return 0;
    }
    if (c_temb->parsed()) {
      RunConfig cfg = detail::config_from_flags(config_path, seed_override, seed_set,
                                                jobs_override);
      auto datasets = corpus::ingest_jsonl(in_path);
      auto vocab = corpus::build_vocab(
          datasets, corpus::VocabPolicy::min_count(std::max(1, cfg.emb.min_count)));
      embedding::EmbeddingParams p = cfg.emb;
      p.seed = cfg.master_seed;
      embedding::save(embedding::train_w2v(datasets, vocab, p), out_path);
      std::cout << "wrote " << out_path << '\n';
      return 0;
    }
    if (c_tlm->parsed()) {
      RunConfig cfg = detail::config_from_flags(config_path, seed_override, seed_set,
                                                jobs_override);
      auto datasets = corpus::ingest_jsonl(in_path);
      lm::LMParams p = cfg.lm_params;
      p.seed = cfg.master_seed;
      lm::TrainTrace trace;
      auto model = lm::train_lm(datasets, p, &trace);
      lm::save_checkpoint(model, out_path);
      nlohmann::json j{{"train_ppl", lm::perplexity(model, datasets)},
                       {"epoch_train_ppl", trace.epoch_train_ppl}};
      if (!eval_path.empty())
        j["test_ppl"] = lm::perplexity(model, corpus::ingest_jsonl(eval_path));
      if (!report_path.empty()) detail::write_json(j, report_path);
      std::cout << j.dump() << '\n';
      return 0;
    }
    if (c_ae_prep->parsed()) {
      RunConfig cfg = detail::config_from_flags(config_path, seed_override, seed_set,
                                                jobs_override);
      auto [target, shadow] = split_target_user(corpus::ingest_jsonl(in_path), target_user);
      auto pairs = embed_attack::adjacent_pairs(target);
      std::size_t n_users = cfg.attack_n_users ? cfg.attack_n_users
                                               : std::min<std::size_t>(shadow.size(), cfg.n);
      auto ensemble = embed_attack::train_shadows(target, shadow, cfg.k, cfg.emb,
                                                  n_users, std::nullopt,
                                                  cfg.master_seed, cfg.effective_jobs());
      auto attack = embed_attack::fit_attack(ensemble, pairs, cfg.lambda0, cfg.cap);
      detail::write_json(embed_attack::to_json(attack), out_path);
      std::cout << "selected " << attack.model.weights.size() << " pairs, "
                << attack.query_words.size() << " query words\n";
      return 0;
    }
    if (c_ae_inf->parsed()) {
      std::ifstream in(attack_path);
      if (!in) throw IoError("cannot open attack artifact: " + attack_path);
      nlohmann::json aj;
      in >> aj;
      auto attack = embed_attack::attack_from_json(aj);
      auto model = embedding::load(model_path);
      auto res = embed_attack::infer(attack, embed_attack::make_oracle(model));
      nlohmann::json j{{"member", res.member},
                       {"score", res.score},
                       {"queries_used", res.queries_used}};
      if (!out_path.empty()) detail::write_json(j, out_path);
      std::cout << (res.member ? "MEMBER" : "NON-MEMBER") << '\n';
      return 0;
    }
    if (c_ac->parsed()) {
      RunConfig cfg = detail::config_from_flags(config_path, seed_override, seed_set,
                                                jobs_override);
      auto [target, shadow] = split_target_user(corpus::ingest_jsonl(in_path), target_user);
      auto clf_sets = corpus::ingest_jsonl(clf_data_path);
      std::vector<corpus::Document> clf_docs;
      for (auto& ds : clf_sets)
        for (auto& d : ds.documents) clf_docs.push_back(std::move(d));
      clf_attack::ClfAttackParams ap;
      ap.k = cfg.k;
      ap.emb = cfg.emb;
      ap.n_users = cfg.attack_n_users ? cfg.attack_n_users
                                      : std::min<std::size_t>(shadow.size(), cfg.n);
      ap.lambda0 = cfg.lambda0;
      ap.cap = cfg.cap;
      ap.n_query_docs = cfg.n_query_docs;
      ap.max_reps = cfg.max_reps;
      ap.clf_train_docs = cfg.clf_train_docs;
      ap.shared_data = cfg.shared_data;
      ap.clf = cfg.classifier;
      ap.rf.n_trees = cfg.rf_trees;
      ap.seed = cfg.master_seed;
      ap.jobs = cfg.effective_jobs();
      auto attack = clf_attack::fit_clf_attack(target, shadow, clf_docs, ap);

      auto target_model = embedding::load(model_path);
      clf_attack::ClassifierParams cp = cfg.classifier;
      cp.seed = cfg.master_seed;
      auto target_clf = clf_attack::train_target_classifier(target_model, clf_docs, cp);
      clf_attack::LabelOracle oracle = [&](const std::vector<corpus::Token>& tokens) {
        return target_clf.clf.predict(clf_attack::embed_document(target_model, tokens));
      };
      auto res = clf_attack::infer_clf(attack, oracle);
      nlohmann::json j{{"member", res.member},
                       {"queries_used", res.queries_used},
                       {"target_clf_test_accuracy", target_clf.test_accuracy}};
      if (!out_path.empty()) detail::write_json(j, out_path);
      std::cout << (res.member ? "MEMBER" : "NON-MEMBER") << '\n';
      return 0;
    }
    if (c_al->parsed()) {
      RunConfig cfg = detail::config_from_flags(config_path, seed_override, seed_set,
                                                jobs_override);
      auto [target, rest] = split_target_user(corpus::ingest_jsonl(in_path), target_user);
      auto shadow = corpus::ingest_jsonl(shadow_path);
      auto model = lm::load_checkpoint(model_path);
      lm::CachingOracle oracle(model);
      auto wrapped = [&oracle](const std::vector<corpus::Token>& prefix) {
        return oracle(prefix);
      };
      lm_attack::CuratedPairs pairs;
      lm_attack::MembershipPrediction pred;
      if (baseline_mode.empty()) {
        lm_attack::CurationParams cur;
        cur.k = cfg.curation_k;
        cur.n_users = std::min<std::size_t>(cfg.curation_users, shadow.size());
        cur.emb = cfg.emb;
        cur.lambda0 = cfg.lambda0;
        cur.cap = cfg.cap;
        cur.seed = cfg.master_seed;
        cur.jobs = cfg.effective_jobs();
        pairs = lm_attack::curate_pairs(target, shadow, cur);
        pred = threshold_set
                   ? lm_attack::attack_user_threshold(wrapped, target, pairs, threshold)
                   : lm_attack::attack_user(wrapped, target, pairs);
      } else if (baseline_mode == "all-pairs") {
        pred = lm_attack::baselines(wrapped, target, lm_attack::BaselineMode::kAllPairs);
      } else if (baseline_mode == "dict-filtered") {
        auto common = corpus::top_frequent_words(shadow, cfg.common_top_n);
        pred = lm_attack::baselines(wrapped, target,
                                    lm_attack::BaselineMode::kDictFiltered, common);
      } else {
        throw ConfigError("unknown baseline mode '" + baseline_mode + "'");
      }
      auto j = lm_attack::to_json(pairs, pred);
      if (!out_path.empty()) detail::write_json(j, out_path);
      std::cout << (pred.member ? "MEMBER" : "NON-MEMBER") << '\n';
      return 0;
    }
    if (c_exp->parsed()) {
      CLI::App* sub = c_exp->get_subcommands().front();
      RunConfig cfg = detail::config_from_flags(config_path, seed_override, seed_set,
                                                jobs_override);
      const std::string name = sub->get_name();
      if (name == "embed") cfg.kind = harness::ExperimentKind::kEmbed;
      if (name == "embed-proxy") cfg.kind = harness::ExperimentKind::kEmbedProxy;
      if (name == "embed-subsample") cfg.kind = harness::ExperimentKind::kEmbedSubsample;
      if (name == "clf")
        cfg.kind = cfg.shared_data ? harness::ExperimentKind::kClfShared
                                   : harness::ExperimentKind::kClfSeparate;
      if (name == "lm") cfg.kind = harness::ExperimentKind::kLm;

      harness::GameConfig game = cfg.game_config();
      harness::ExperimentReport report;
      report.config_echo = default_config_json();  // overwritten below
      report.config_echo["experiment"]["kind"] = harness::kind_name(game.kind);
      report.config_echo["master_seed"] = cfg.master_seed;

      switch (game.kind) {
        case harness::ExperimentKind::kEmbed:
        case harness::ExperimentKind::kEmbedProxy:
        case harness::ExperimentKind::kEmbedSubsample: {
          auto result = harness::run_embed_game(game);
          harness::append_rows(report, harness::kind_name(game.kind),
                               game.target_size, game.k, result);
          break;
        }
        case harness::ExperimentKind::kClfSeparate:
        case harness::ExperimentKind::kClfShared: {
          auto outcome = harness::run_clf_game(game);
          harness::append_rows(report, harness::kind_name(game.kind),
                               game.target_size, game.k, outcome.result);
          report.config_echo["mean_clf_test_accuracy"] =
              outcome.mean_clf_test_accuracy;
          break;
        }
        case harness::ExperimentKind::kLm: {
          auto outcome = harness::run_lm_game(game);
          harness::append_rows(report, "lm-curated", game.target_size,
                               game.lm.curation_k, outcome.curated);
          harness::append_rows(report, "lm-baseline1", game.target_size, 0,
                               outcome.baseline1);
          harness::append_rows(report, "lm-baseline2", game.target_size, 0,
                               outcome.baseline2);
          report.config_echo["curated_queries"] = outcome.curated_queries;
          report.config_echo["baseline1_queries"] = outcome.baseline1_queries;
          report.config_echo["baseline2_queries"] = outcome.baseline2_queries;
          break;
        }
      }
      auto files = harness::emit_report(report, out_path);
      for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
      return 0;
    }
    if (c_rep->parsed()) {
      auto report = detail::report_from_csv(runs_path);
      auto files = harness::emit_report(report, out_path);
      for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace milab::cli
