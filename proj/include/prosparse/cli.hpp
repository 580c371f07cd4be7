// Copyright 2026 The prosparse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "prosparse/checkpoint.hpp"
#include "prosparse/config.hpp"
#include "prosparse/corpus.hpp"
#include "prosparse/dataset.hpp"
#include "prosparse/error.hpp"
#include "prosparse/metrics.hpp"
#include "prosparse/model.hpp"
#include "prosparse/prosody.hpp"
#include "prosparse/synth.hpp"
#include "prosparse/text.hpp"
#include "prosparse/train.hpp"
#include "prosparse/treeops.hpp"

namespace prosparse::cli {

namespace fs = std::filesystem;

/// Keys accepted by `train --config` besides the model and train keys.
inline const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {"train_split", "dev_split", "lexicon", "train_backoff"};
  return keys;
}

inline void check_known_keys(const KeyValueConfig& kv) {
  std::set<std::string> known(model_config_keys().begin(), model_config_keys().end());
  known.insert(train_config_keys().begin(), train_config_keys().end());
  known.insert(run_config_keys().begin(), run_config_keys().end());
  for (const auto& [k, v] : kv.entries())
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

inline std::vector<Tree> trees_of(const std::vector<TreebankEntry>& entries) {
  std::vector<Tree> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.tree);
  return out;
}

inline void write_report_row(std::ostream& out, const std::string& name, const EvalReport& r) {
  out << name << '\t' << r.sentences << '\t' << r.counts.matched << '\t' << r.counts.gold << '\t' << r.counts.pred
      << '\t' << text::fmt(r.precision, 2) << '\t' << text::fmt(r.recall, 2) << '\t' << text::fmt(r.f1, 2) << '\n';
}

inline constexpr const char* kReportHeader = "stratum\tsentences\tmatched\tgold\tpred\tprecision\trecall\tf1\n";

/// Reads decode input: bracketed trees (gold ignored) or token lines, each
/// optionally prefixed by `id \t`.
inline std::vector<Example> read_decode_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::trim(line);
    if (view.empty()) continue;
    Example ex;
    ex.utterance.id = "s" + std::to_string(lineno);
    if (auto tab = view.find('\t'); tab != std::string_view::npos) {
      ex.utterance.id = std::string(text::trim(view.substr(0, tab)));
      view = text::trim(view.substr(tab + 1));
    }
    if (!view.empty() && view.front() == '(') {
      auto tree = preprocess_tree(parse_bracketed(view, lineno));
      if (!tree) continue;
      ex.utterance.tokens = tree->leaves();
      ex.gold = std::move(*tree);
    } else {
      for (auto tok : text::split_ws(view)) ex.utterance.tokens.push_back(text::lower(tok));
    }
    ex.utterance.speaker_side = ex.utterance.id;
    out.push_back(std::move(ex));
  }
  return out;
}

inline int cmd_synth(const SynthConfig& base, std::uint64_t seed, const std::map<std::string, std::size_t>& sizes,
                     const fs::path& out_dir, std::ostream& out) {
  std::vector<Example> all;
  std::uint64_t offset = 0;
  for (const auto& [split, n] : sizes) {
    if (n == 0) continue;
    SynthConfig cfg = base;
    cfg.count = n;
    cfg.id_prefix = split + "-";
    auto ex = gen_synthetic(cfg, seed * 1000 + offset++);
    write_split(out_dir, split, ex);
    all.insert(all.end(), ex.begin(), ex.end());
    out << split << '\t' << ex.size() << '\n';
  }
  {
    auto lex = open_out(out_dir / "lexicon.tsv");
    write_lexicon(lex, synthetic_lexicon(base.grammar, all));
  }
  auto g = open_out(out_dir / "grammar.txt");
  write_grammar(g, base.grammar);
  return 0;
}

inline int cmd_train(const fs::path& config_path, const std::vector<std::string>& overrides,
                     std::optional<std::uint64_t> seed, const fs::path& data, const fs::path& out_dir, std::ostream& out) {
  KeyValueConfig kv = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path.string());
  for (const auto& o : overrides) kv.set_assignment(o, "--set " + o);
  if (seed) kv.set("seed", std::to_string(*seed));
  check_known_keys(kv);
  ModelConfig mc = ModelConfig::from(kv);
  TrainConfig tc = TrainConfig::from(kv);
  const std::string train_split = kv.get_string("train_split", "train");
  const std::string dev_split = kv.get_string("dev_split", "dev");
  const fs::path lex_path = data / kv.get_string("lexicon", "lexicon.tsv");
  const bool backoff = kv.get_bool("train_backoff", true);

  auto train_set = load_split(data, train_split);
  std::vector<Example> dev;
  if (has_split(data, dev_split)) dev = load_split(data, dev_split);
  DurationLexicon lexicon = fs::exists(lex_path) ? load_lexicon(lex_path.string()) : DurationLexicon{};

  auto report = [&out](const char* what) {
    return [&out, what](const EpochRecord& e) {
      out << what << "\tepoch " << e.epoch << "\tloss " << text::fmt(e.train_loss, 4) << "\tdev_f1 "
          << text::fmt(e.dev_f1, 2) << '\n';
      return true;
    };
  };
  auto result = train(train_set, dev, lexicon, mc, tc, report("model"));
  save_model(result.model, out_dir);
  {
    auto log = open_out(out_dir / "train_log.tsv");
    result.log.write_tsv(log);
    auto cfg = open_out(out_dir / "train_config.txt");
    tc.to_kv().write(cfg);
    auto lex = open_out(out_dir / "lexicon.tsv");
    write_lexicon(lex, lexicon);
  }
  if (mc.features.any() && backoff) {
    ModelConfig text_mc = mc;
    text_mc.features = {};
    auto text_result = train(train_set, dev, lexicon, text_mc, tc, report("backoff"));
    save_model(text_result.model, out_dir / "backoff");
    auto log = open_out(out_dir / "backoff" / "train_log.tsv");
    text_result.log.write_tsv(log);
  }
  out << "best_epoch\t" << result.log.best_epoch << "\tdev_f1\t" << text::fmt(result.log.best_dev_f1, 2) << '\n';
  return 0;
}

inline int cmd_decode(const fs::path& model_dir, const fs::path& input, const fs::path& data, const std::string& split,
                      const fs::path& out_path, std::ostream& out) {
  Seq2SeqParser model = load_model(model_dir);
  std::optional<Seq2SeqParser> backoff;
  if (fs::exists(model_dir / "backoff" / "config.txt")) backoff.emplace(load_model(model_dir / "backoff"));
  DurationLexicon lexicon;
  if (fs::exists(model_dir / "lexicon.tsv")) lexicon = load_lexicon((model_dir / "lexicon.tsv").string());

  std::vector<Example> examples;
  if (!data.empty()) examples = load_split(data, split);
  else if (!input.empty()) examples = read_decode_input(input);
  else throw ConfigError("decode needs --input or --data");

  auto sink = open_out(out_path);
  std::size_t backoffs = 0, repaired = 0;
  for (const auto& ex : examples) {
    if (ex.utterance.tokens.empty()) throw DataError("utterance " + ex.utterance.id + " has no tokens");
    auto r = parse_sentence(model, backoff ? &*backoff : nullptr, ex, lexicon);
    backoffs += r.backoff;
    repaired += r.repaired;
    sink << ex.utterance.id << '\t' << to_bracketed(r.tree) << '\n';
  }
  out << "sentences\t" << examples.size() << "\nbackoff\t" << backoffs << "\nrepaired\t" << repaired << '\n';
  return 0;
}

struct ScoreOptions {
  fs::path gold, pred, compare, table;
  bool flat = false;
  std::string strata;
  std::size_t draws = 100000;
  std::uint64_t seed = 1;
};

inline Stratifier make_stratifier(const std::string& name) {
  if (name == "length") return length_stratifier();
  if (name == "disfluency") return disfluency_stratifier();
  throw ConfigError("strata must be 'length' or 'disfluency', got '" + name + "'");
}

inline int cmd_score(const ScoreOptions& o, std::ostream& out) {
  auto gold = trees_of(load_treebank(o.gold.string()));
  auto pred = trees_of(load_treebank(o.pred.string()));
  EvalReport overall = o.flat ? flat_f1(gold, pred) : parseval(gold, pred);
  out << kReportHeader;
  write_report_row(out, "all", overall);
  if (!o.strata.empty()) {
    auto strata = stratified_report(gold, pred, make_stratifier(o.strata), o.flat);
    for (const auto& [name, r] : strata) write_report_row(out, name, r);
    if (!o.table.empty()) {
      auto t = open_out(o.table);
      t << kReportHeader;
      for (const auto& [name, r] : strata) write_report_row(t, name, r);
    }
  }
  if (!o.compare.empty()) {
    auto other = trees_of(load_treebank(o.compare.string()));
    EvalReport second = o.flat ? flat_f1(gold, other) : parseval(gold, other);
    write_report_row(out, "compare", second);
    const double p = bootstrap_pvalue(gold, pred, other, o.draws, o.seed);
    out << "p_value\t" << text::fmt(p, 5) << '\n';
  }
  return 0;
}

inline int cmd_analyze(const fs::path& gold_path, const fs::path& pred_path, const fs::path& out_dir, std::ostream& out) {
  auto gold = trees_of(load_treebank(gold_path.string()));
  auto pred = trees_of(load_treebank(pred_path.string()));
  const std::pair<const char*, Stratifier> tables[] = {{"by_length.tsv", length_stratifier()},
                                                      {"by_fluency.tsv", disfluency_stratifier()}};
  for (const auto& [file, strat] : tables) {
    auto t = open_out(out_dir / file);
    t << kReportHeader;
    write_report_row(t, "all", parseval(gold, pred));
    for (const auto& [name, r] : stratified_report(gold, pred, strat)) write_report_row(t, name, r);
  }
  auto per = open_out(out_dir / "per_sentence.tsv");
  per << "index\tlength\tfluent\tmatched\tgold\tpred\tf1\n";
  auto counts = sentence_counts(gold, pred);
  for (std::size_t i = 0; i < counts.size(); ++i)
    per << i << '\t' << gold[i].num_leaves() << '\t' << (contains_edit(gold[i]) ? 0 : 1) << '\t' << counts[i].matched
        << '\t' << counts[i].gold << '\t' << counts[i].pred << '\t' << text::fmt(f1_score(counts[i]), 2) << '\n';
  out << "wrote " << (out_dir / "by_length.tsv").string() << ", by_fluency.tsv, per_sentence.tsv\n";
  return 0;
}

inline int cmd_linearize(const fs::path& input, const fs::path& out_path, std::ostream& out) {
  auto entries = load_treebank(input.string());
  std::ofstream file;
  if (!out_path.empty()) file = open_out(out_path);
  std::ostream& sink = out_path.empty() ? out : file;
  for (const auto& e : entries) sink << e.id << '\t' << to_string(linearize(e.tree)) << '\n';
  return 0;
}

/// Per-word prosodic features of one split as a table.
inline int cmd_featurize(const fs::path& data, const std::string& split, const fs::path& lexicon_path, double context,
                         const fs::path& out_path, const fs::path& fbank, const fs::path& energy_out, std::ostream& out) {
  if (!fbank.empty()) {
    if (energy_out.empty()) throw ConfigError("--energy-out is required with --fbank");
    auto table = load_filterbank(fbank.string());
    std::vector<const Matrix*> all;
    for (const auto& [id, m] : table) all.push_back(&m);
    const double peak = speaker_max_total(all);
    auto sink = open_out(energy_out);
    for (const auto& [id, m] : table) write_frame_records(sink, id, compute_energy_features(m, peak));
    out << "energy\t" << table.size() << '\n';
  }
  if (data.empty()) return 0;
  DurationLexicon lexicon;
  if (!lexicon_path.empty()) lexicon = load_lexicon(lexicon_path.string());
  else if (fs::exists(data / "lexicon.tsv")) lexicon = load_lexicon((data / "lexicon.tsv").string());
  auto examples = load_split(data, split);
  auto sink = open_out(out_path);
  sink << "id\tindex\ttoken\tpause_pre\tpause_post\tdelta\tframes\n";
  std::size_t skipped = 0;
  for (const auto& ex : examples) {
    if (!ex.has_acoustics) {
      ++skipped;
      continue;
    }
    auto feats = build_prosodic_inputs(ex, lexicon, {context, 1});
    for (std::size_t i = 0; i < feats.size(); ++i)
      sink << ex.utterance.id << '\t' << i << '\t' << ex.utterance.tokens[i] << '\t' << pause_name(feats[i].pause_pre)
           << '\t' << pause_name(feats[i].pause_post) << '\t' << text::fmt(feats[i].delta) << '\t'
           << feats[i].frames.rows << '\n';
  }
  out << "utterances\t" << examples.size() - skipped << "\nbackoff\t" << skipped << '\n';
  return 0;
}

/// Entry point. Returns 0 on success, 1 on a runtime or configuration
/// error and 2 on a usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Attention-based constituency parser for speech transcripts with prosodic features", "prosparse"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::optional<std::uint64_t> train_seed;
  std::string out_s, data_s, config_s, model_s, input_s, split_s = "test", lexicon_s, grammar_s, fbank_s, energy_s;
  std::vector<std::string> overrides;
  std::size_t n_train = 500, n_dev = 100, n_test = 200;
  bool no_coupling = false;
  double disfluency = 0.0, jitter = 0.0, context = 0.25;
  ScoreOptions score;
  std::string gold_s, pred_s;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with prosody-syntax coupling");
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--out", out_s, "Output data directory")->required();
  synth->add_option("--train", n_train, "Training sentences");
  synth->add_option("--dev", n_dev, "Development sentences");
  synth->add_option("--test", n_test, "Test sentences");
  synth->add_flag("--no-coupling", no_coupling, "Place long pauses independently of attachment");
  synth->add_option("--disfluency", disfluency, "Rate of EDITED subject repetitions");
  synth->add_option("--jitter", jitter, "Relative word duration jitter");
  synth->add_option("--grammar", grammar_s, "Grammar file (default: built-in)");

  auto* featurize = app.add_subcommand("featurize", "Compute prosodic word features or energy features");
  featurize->add_option("--data", data_s, "Data directory");
  featurize->add_option("--split", split_s, "Split name");
  featurize->add_option("--lexicon", lexicon_s, "Duration lexicon (default: <data>/lexicon.tsv)");
  featurize->add_option("--context", context, "Frame context in seconds");
  featurize->add_option("--out", out_s, "Feature table output");
  featurize->add_option("--fbank", fbank_s, "40-band filterbank records of one speaker side");
  featurize->add_option("--energy-out", energy_s, "Energy feature output for --fbank");

  auto* linearize_cmd = app.add_subcommand("linearize", "Print linearized parses of a treebank");
  linearize_cmd->add_option("--input", input_s, "Treebank file")->required();
  linearize_cmd->add_option("--out", out_s, "Output file (default: stdout)");

  auto* train_cmd = app.add_subcommand("train", "Train a parser");
  train_cmd->add_option("--config", config_s, "key = value config file");
  train_cmd->add_option("--set", overrides, "Config override key=value (repeatable)");
  train_cmd->add_option("--seed", train_seed, "Random seed (overrides config)");
  train_cmd->add_option("--data", data_s, "Data directory")->required();
  train_cmd->add_option("--out", out_s, "Checkpoint directory")->required();

  auto* decode = app.add_subcommand("decode", "Parse sentences with a trained model");
  decode->add_option("--model", model_s, "Checkpoint directory")->required();
  decode->add_option("--input", input_s, "Treebank or token file");
  decode->add_option("--data", data_s, "Data directory (uses acoustics)");
  decode->add_option("--split", split_s, "Split name with --data");
  decode->add_option("--out", out_s, "Output treebank")->required();

  auto* score_cmd = app.add_subcommand("score", "Bracket scoring with optional strata and significance");
  score_cmd->add_option("--gold", gold_s, "Gold treebank")->required();
  score_cmd->add_option("--pred", pred_s, "Predicted treebank")->required();
  score_cmd->add_flag("--flat", score.flat, "Flatten EDITED subtrees before scoring");
  score_cmd->add_option("--strata", score.strata, "length or disfluency");
  score_cmd->add_option("--table", lexicon_s, "Write the stratified table here");
  score_cmd->add_option("--compare", input_s, "Second predicted treebank for the bootstrap test");
  score_cmd->add_option("--draws", score.draws, "Bootstrap draws");
  score_cmd->add_option("--seed", score.seed, "Bootstrap seed");

  auto* analyze = app.add_subcommand("analyze", "Write per-length and per-fluency tables");
  analyze->add_option("--gold", gold_s, "Gold treebank")->required();
  analyze->add_option("--pred", pred_s, "Predicted treebank")->required();
  analyze->add_option("--out", out_s, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr)
      err << "error: unknown subcommand '" << argv[1] << "'\n" << app.help();
    else
      err << "error: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    if (synth->parsed()) {
      SynthConfig cfg;
      if (!grammar_s.empty()) {
        std::ifstream g(grammar_s);
        if (!g) throw ConfigError("cannot open grammar " + grammar_s);
        cfg.grammar = read_grammar(g);
      }
      cfg.coupling = !no_coupling;
      cfg.disfluency_rate = disfluency;
      cfg.duration_jitter = jitter;
      return cmd_synth(cfg, seed, {{"train", n_train}, {"dev", n_dev}, {"test", n_test}}, out_s, out);
    }
    if (featurize->parsed()) {
      if (!data_s.empty() && out_s.empty()) throw ConfigError("--out is required with --data");
      if (data_s.empty() && fbank_s.empty()) throw ConfigError("featurize needs --data or --fbank");
      return cmd_featurize(data_s, split_s, lexicon_s, context, out_s, fbank_s, energy_s, out);
    }
    if (linearize_cmd->parsed()) return cmd_linearize(input_s, out_s, out);
    if (train_cmd->parsed()) return cmd_train(config_s, overrides, train_seed, data_s, out_s, out);
    if (decode->parsed()) return cmd_decode(model_s, input_s, data_s, split_s, out_s, out);
    if (score_cmd->parsed()) {
      score.gold = gold_s;
      score.pred = pred_s;
      score.compare = input_s;
      score.table = lexicon_s;
      return cmd_score(score, out);
    }
    if (analyze->parsed()) return cmd_analyze(gold_s, pred_s, out_s, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace prosparse::cli
