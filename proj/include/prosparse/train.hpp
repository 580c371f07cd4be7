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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prosparse/autodiff/optim.hpp"
#include "prosparse/config.hpp"
#include "prosparse/corpus.hpp"
#include "prosparse/error.hpp"
#include "prosparse/metrics.hpp"
#include "prosparse/model.hpp"
#include "prosparse/prosody.hpp"
#include "prosparse/text.hpp"
#include "prosparse/treeops.hpp"

namespace prosparse {

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr0 = 0.001;
  double decay_factor = 0.9;
  std::size_t loss_window = 3;
  std::size_t loss_check_interval = 500;  // updates between training-loss checks
  std::size_t max_epochs = 50;
  std::uint64_t seed = 1;
  std::size_t patience = 5;  // epochs without dev F1 improvement
  double clip_norm = 0.0;    // 0 disables clipping

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
    if (!(decay_factor > 0 && decay_factor < 1)) throw ConfigError("decay_factor must be in (0, 1)");
    if (loss_window == 0) throw ConfigError("loss_window must be positive");
    if (loss_check_interval == 0) throw ConfigError("loss_check_interval must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
    if (!(clip_norm >= 0)) throw ConfigError("clip_norm must be nonnegative");
  }

  static TrainConfig from(const KeyValueConfig& kv) { return from(kv, TrainConfig()); }

  static TrainConfig from(const KeyValueConfig& kv, TrainConfig c) {
    c.batch_size = kv.get_size("batch_size", c.batch_size);
    c.lr0 = kv.get_double("lr0", c.lr0);
    c.decay_factor = kv.get_double("decay_factor", c.decay_factor);
    c.loss_window = kv.get_size("loss_window", c.loss_window);
    c.loss_check_interval = kv.get_size("loss_check_interval", c.loss_check_interval);
    c.max_epochs = kv.get_size("max_epochs", c.max_epochs);
    c.seed = kv.get_size("seed", c.seed);
    c.patience = kv.get_size("patience", c.patience);
    c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
    c.validate();
    return c;
  }

  KeyValueConfig to_kv() const {
    KeyValueConfig kv;
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("lr0", text::fmt(lr0, 9));
    kv.set("decay_factor", text::fmt(decay_factor));
    kv.set("loss_window", std::to_string(loss_window));
    kv.set("loss_check_interval", std::to_string(loss_check_interval));
    kv.set("max_epochs", std::to_string(max_epochs));
    kv.set("seed", std::to_string(seed));
    kv.set("patience", std::to_string(patience));
    kv.set("clip_norm", text::fmt(clip_norm));
    return kv;
  }
};

inline const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {"batch_size", "lr0",        "decay_factor", "loss_window", "loss_check_interval",
                                                "max_epochs", "seed",       "patience",     "clip_norm"};
  return keys;
}

/// Learning rate after a new interval loss. `history` ends with the newest
/// loss; the rate decays when it is worse than every one of the previous
/// `loss_window` values.
inline double lr_update(std::span<const double> history, double current_lr, const TrainConfig& cfg) {
  if (history.size() < cfg.loss_window + 1) return current_lr;
  const double newest = history.back();
  auto prev = history.subspan(history.size() - 1 - cfg.loss_window, cfg.loss_window);
  const double worst = *std::max_element(prev.begin(), prev.end());
  return newest > worst ? current_lr * cfg.decay_factor : current_lr;
}

struct IntervalRecord {
  std::size_t update = 0;
  double loss = 0.0;
  double lr = 0.0;
  friend bool operator==(const IntervalRecord&, const IntervalRecord&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t updates = 0;
  double train_loss = 0.0;
  double dev_f1 = 0.0;
  double lr = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainLog {
  std::vector<IntervalRecord> intervals;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  double wall_seconds = 0.0;

  /// Tab-separated rows: kind, step, loss, dev_f1, lr.
  void write_tsv(std::ostream& out) const {
    out << "kind\tstep\tloss\tdev_f1\tlr\n";
    for (const auto& r : intervals)
      out << "interval\t" << r.update << '\t' << text::fmt(r.loss) << "\t-\t" << text::fmt(r.lr, 9) << '\n';
    for (const auto& e : epochs)
      out << "epoch\t" << e.epoch << '\t' << text::fmt(e.train_loss) << '\t' << text::fmt(e.dev_f1, 2) << '\t'
          << text::fmt(e.lr, 9) << '\n';
    out << "best\t" << best_epoch << "\t-\t" << text::fmt(best_dev_f1, 2) << "\t-\n";
  }
};

/// Greedy decoding: argmax symbol (lowest id on ties) fed back until the
/// end marker or `max_len` symbols. The end marker is not returned.
inline std::vector<std::string> greedy_decode(const Seq2SeqParser& model, const ParserInput& in,
                                              std::optional<std::size_t> max_len = std::nullopt) {
  ad::NoGradGuard no_grad;
  const std::size_t cap = max_len.value_or(4 * in.tokens.size() + 8);
  EncoderState enc = model.encode(model.embed_inputs(in));
  DecoderState state = model.initial_decoder_state(enc);
  std::vector<std::string> out;
  std::size_t prev = kStartId;
  while (out.size() < cap) {
    DecodeStep step = model.decode_step(prev, state, enc);
    auto logits = step.logits.values();
    const std::size_t best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (best == kEndId) break;
    out.push_back(model.symbols().item(best));
    state = std::move(step.state);
    prev = best;
  }
  return out;
}

struct ParseOutcome {
  Tree tree;
  bool backoff = false;   // parsed by the text-only model
  bool repaired = false;  // decoder output needed repair
  std::vector<std::string> raw;
};

/// Parses one example, routing to `text_model` when the acoustic model
/// cannot be used. Always returns a tree over the example's tokens.
inline ParseOutcome parse_sentence(const Seq2SeqParser& model, const Seq2SeqParser* text_model, const Example& ex,
                                   const DurationLexicon& lexicon) {
  const Seq2SeqParser* chosen = &model;
  ParseOutcome out;
  if (model.config().features.any() && !ex.has_acoustics) {
    if (text_model == nullptr || text_model->config().features.any())
      throw ContractViolation("utterance " + ex.utterance.id + " needs a text-only backoff model");
    chosen = text_model;
    out.backoff = true;
  }
  out.raw = greedy_decode(*chosen, make_parser_input(ex, *chosen, lexicon));
  const std::size_t n = ex.utterance.tokens.size();
  LinearParse parse{out.raw};
  if (!is_valid_linear(parse.symbols, n)) {
    parse = repair(out.raw, n);
    out.repaired = true;
  }
  out.tree = delinearize(parse, ex.utterance.tokens);
  return out;
}

struct CorpusParse {
  std::vector<Tree> trees;
  std::size_t backoff_count = 0;
  std::size_t repaired_count = 0;
};

inline CorpusParse parse_corpus(const Seq2SeqParser& model, const Seq2SeqParser* text_model,
                                std::span<const Example> examples, const DurationLexicon& lexicon) {
  CorpusParse out;
  out.trees.reserve(examples.size());
  for (const auto& ex : examples) {
    auto r = parse_sentence(model, text_model, ex, lexicon);
    out.backoff_count += r.backoff;
    out.repaired_count += r.repaired;
    out.trees.push_back(std::move(r.tree));
  }
  return out;
}

struct TrainResult {
  Seq2SeqParser model;
  TrainLog log;
};

/// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&)>;

namespace detail {

struct PreparedExample {
  ParserInput input;
  std::vector<std::size_t> gold;
  std::size_t length = 0;
};

inline double evaluate_f1(const Seq2SeqParser& model, std::span<const Example> examples, const DurationLexicon& lex) {
  std::vector<Tree> gold;
  gold.reserve(examples.size());
  for (const auto& ex : examples) gold.push_back(ex.gold);
  auto parsed = parse_corpus(model, nullptr, examples, lex);
  return parseval(gold, parsed.trees).f1;
}

/// Shuffle, sort pools of ten batches by length, cut into batches, shuffle
/// the batches.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<PreparedExample>& data,
                                                          std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t pool = 10 * batch_size;
  for (std::size_t b = 0; b < order.size(); b += pool) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(b);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + pool));
    std::stable_sort(first, last, [&](std::size_t x, std::size_t y) { return data[x].length < data[y].length; });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < order.size(); b += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + batch_size)));
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace detail

/// Trains a parser from scratch. Models with acoustic features train only
/// on examples that have alignments. Dev F1 is computed after each epoch
/// (on the training examples when `dev` is empty); the best-dev parameters
/// are restored at the end. Stops after `patience` epochs without
/// improvement, or once dev F1 reaches 100.
inline TrainResult train(std::span<const Example> train_set, std::span<const Example> dev_set,
                         const DurationLexicon& lexicon, ModelConfig model_config, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const bool acoustic = model_config.features.any();
  std::vector<Example> usable, dev;
  for (const auto& ex : train_set)
    if (!acoustic || ex.has_acoustics) usable.push_back(ex);
  for (const auto& ex : dev_set)
    if (!acoustic || ex.has_acoustics) dev.push_back(ex);
  if (usable.empty()) throw ContractViolation("train: no usable training examples");
  if (dev.empty()) dev = usable;

  std::vector<std::vector<std::string>> sentences;
  std::vector<Tree> trees;
  for (const auto& ex : usable) {
    sentences.push_back(ex.utterance.tokens);
    trees.push_back(ex.gold);
  }
  model_config.init_seed = cfg.seed;
  Seq2SeqParser model(model_config, build_word_vocabulary(sentences), build_symbol_vocabulary(trees));

  std::vector<detail::PreparedExample> data;
  data.reserve(usable.size());
  for (const auto& ex : usable) {
    detail::PreparedExample p;
    p.input = make_parser_input(ex, model, lexicon);
    p.gold = model.target_ids(linearize(ex.gold));
    p.length = ex.utterance.tokens.size();
    data.push_back(std::move(p));
  }

  std::mt19937_64 rng(cfg.seed);
  ad::AdamState adam = ad::make_adam_state(model.params(), cfg.lr0);
  TrainLog log;
  std::vector<double> interval_history;
  double interval_sum = 0.0;
  std::size_t interval_count = 0, updates = 0, stale = 0;
  std::vector<std::vector<double>> best = model.params().snapshot();
  bool have_best = false;
  RunMode mode{true, &rng};

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_sum = 0.0;
    std::size_t epoch_count = 0;
    auto batches = detail::make_batches(data, cfg.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      model.params().zero_grad();
      const double seed = 1.0 / static_cast<double>(batch.size());
      for (std::size_t idx : batch) {
        Tensor loss = model.sequence_loss(data[idx].input, data[idx].gold, mode);
        const double value = loss.item();
        if (!std::isfinite(value))
          throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                              " (example " + usable[idx].utterance.id + ")");
        loss.backward(seed);
        epoch_sum += value;
        interval_sum += value;
        ++epoch_count;
        ++interval_count;
      }
      ad::adam_step(model.params(), adam, cfg.clip_norm);
      ++updates;
      if (updates % cfg.loss_check_interval == 0) {
        const double interval_loss = interval_sum / static_cast<double>(interval_count);
        interval_history.push_back(interval_loss);
        adam.lr = lr_update(interval_history, adam.lr, cfg);
        log.intervals.push_back({updates, interval_loss, adam.lr});
        interval_sum = 0.0;
        interval_count = 0;
      }
    }
    EpochRecord rec{epoch, updates, epoch_sum / static_cast<double>(epoch_count), 0.0, adam.lr};
    rec.dev_f1 = detail::evaluate_f1(model, dev, lexicon);
    log.epochs.push_back(rec);
    if (!have_best || rec.dev_f1 > log.best_dev_f1) {
      have_best = true;
      log.best_dev_f1 = rec.dev_f1;
      log.best_epoch = epoch;
      best = model.params().snapshot();
      stale = 0;
    } else {
      ++stale;
    }
    if (on_epoch && !on_epoch(rec)) break;
    if (stale >= cfg.patience || log.best_dev_f1 >= 100.0) break;
  }
  model.params().restore(best);
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(log)};
}

}  // namespace prosparse
