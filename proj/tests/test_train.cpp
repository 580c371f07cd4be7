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

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "prosparse/synth.hpp"
#include "prosparse/train.hpp"
#include "test_util.hpp"

namespace prosparse {
namespace {

using testing::few_words;
using testing::small_lexicon;
using testing::ten_symbols;
using testing::tiny_config;
using testing::two_word_example;

void fill(Tensor t, double v) {
  for (auto& x : t.values()) x = v;
}

double lr_after(std::vector<double> history, double lr) { return lr_update(history, lr, TrainConfig{}); }

TEST(LrUpdate, NotWorseThanWorstKeepsRate) { EXPECT_EQ(lr_after({5, 4, 3, 3.5}, 0.001), 0.001); }

TEST(LrUpdate, WorseThanAllThreeDecays) { EXPECT_EQ(lr_after({5, 4, 3, 6}, 0.001), 0.001 * 0.9); }

TEST(LrUpdate, NeedsThreePreviousValues) {
  EXPECT_EQ(lr_after({5, 4, 9}, 0.001), 0.001);
  EXPECT_EQ(lr_after({9}, 0.001), 0.001);
}

TEST(LrUpdate, OnlyTheLastThreeCount) {
  EXPECT_EQ(lr_after({100, 5, 4, 3, 6}, 0.01), 0.01 * 0.9);
  EXPECT_EQ(lr_after({1, 5, 4, 3, 4.5}, 0.01), 0.01);
}

TEST(LrUpdate, EqualToWorstDoesNotDecay) { EXPECT_EQ(lr_after({5, 4, 3, 5}, 0.01), 0.01); }

TEST(LrUpdate, ScriptedTraceMatchesPowerLaw) {
  const std::vector<double> trace = {9.0, 8.0, 7.5, 9.5, 7.0, 6.0, 6.5, 5.0, 7.2, 4.0,
                                     4.1, 4.2, 4.3, 3.0, 3.5, 2.9, 3.6, 2.0, 2.1, 1.0};
  TrainConfig cfg;
  double lr = cfg.lr0;
  int decays = 0;
  std::vector<double> seen;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    seen.push_back(trace[i]);
    lr = lr_update(seen, lr, cfg);
    // Oracle: newest worse than every one of the three before it.
    if (i >= 3 && trace[i] > trace[i - 1] && trace[i] > trace[i - 2] && trace[i] > trace[i - 3]) ++decays;
    EXPECT_DOUBLE_EQ(lr, cfg.lr0 * std::pow(0.9, decays)) << "interval " << i;
  }
  EXPECT_EQ(decays, 4);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.decay_factor = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  KeyValueConfig kv;
  kv.set("lr0", "-1");
  try {
    TrainConfig::from(kv);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lr0"), std::string::npos);
  }
}

TEST(TrainConfig, KeyValueRoundTrip) {
  TrainConfig c;
  c.batch_size = 7;
  c.seed = 99;
  c.clip_norm = 2.5;
  TrainConfig back = TrainConfig::from(c.to_kv());
  EXPECT_EQ(back.to_kv().entries(), c.to_kv().entries());
}

Seq2SeqParser forced_model(std::size_t symbol) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  fill(m.params().get("output.W_s"), 0.0);
  fill(m.params().get("output.b_s"), 0.0);
  m.params().get("output.b_s").values()[symbol] = 50.0;
  return m;
}

TEST(GreedyDecode, EndFirstGivesEmptyOutput) {
  auto m = forced_model(kEndId);
  EXPECT_TRUE(greedy_decode(m, {{"i", "know"}, std::nullopt}).empty());
}

TEST(GreedyDecode, NeverExceedsMaxLen) {
  auto m = forced_model(2);
  EXPECT_EQ(greedy_decode(m, {{"i", "know"}, std::nullopt}).size(), 4u * 2 + 8);
  EXPECT_EQ(greedy_decode(m, {{"i"}, std::nullopt}, 5).size(), 5u);
}

TEST(GreedyDecode, TiesGoToLowestId) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  fill(m.params().get("output.W_s"), 0.0);
  fill(m.params().get("output.b_s"), 0.0);
  auto b = m.params().get("output.b_s").values();
  b[6] = b[8] = 1.0;
  auto out = greedy_decode(m, {{"i"}, std::nullopt}, 3);
  EXPECT_EQ(out, (std::vector<std::string>{"(NP", "(NP", "(NP"}));
}

TEST(ParseSentence, BackoffWithoutAcoustics) {
  Seq2SeqParser prosodic(tiny_config(), few_words(), ten_symbols());
  Seq2SeqParser text(tiny_config({}), few_words(), ten_symbols());
  Example ex = two_word_example();
  ex.has_acoustics = false;
  ex.utterance.alignments.reset();
  auto r = parse_sentence(prosodic, &text, ex, small_lexicon());
  EXPECT_TRUE(r.backoff);
  EXPECT_EQ(r.tree.num_leaves(), 2u);
  EXPECT_THROW(parse_sentence(prosodic, nullptr, ex, small_lexicon()), ContractViolation);
  auto direct = parse_sentence(prosodic, &text, two_word_example(), small_lexicon());
  EXPECT_FALSE(direct.backoff);
}

TEST(ParseSentence, RepairsUnbalancedOutput) {
  auto m = forced_model(8);  // "(S" forever
  auto r = parse_sentence(m, nullptr, two_word_example(), small_lexicon());
  EXPECT_TRUE(r.repaired);
  EXPECT_TRUE(is_valid_tree(r.tree));
  EXPECT_EQ(r.tree.leaves(), two_word_example().utterance.tokens);
}

TEST(ParseSentence, ValidOutputIsNotRepaired) {
  SynthConfig sc;
  sc.count = 30;
  auto data = gen_synthetic(sc, 4);
  auto lex = synthetic_lexicon(sc.grammar, data);
  ModelConfig mc = tiny_config({});
  mc.hidden = 16;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.lr0 = 0.01;
  tc.max_epochs = 6;
  auto result = train(data, {}, lex, mc, tc);
  for (const auto& ex : data) {
    auto r = parse_sentence(result.model, nullptr, ex, lex);
    if (!is_valid_linear(r.raw, ex.utterance.tokens.size())) continue;
    EXPECT_FALSE(r.repaired);
    EXPECT_EQ(r.tree, delinearize(LinearParse{r.raw}, ex.utterance.tokens));
  }
}

TEST(ParseSentence, FuzzedModelsAlwaysYieldTrees) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> len(1, 8);
  const std::vector<std::string> pool = {"the", "dog", "saw", "i", "know", "zebra"};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  int decoded = 0;
  for (int model = 0; model < 100; ++model) {
    ModelConfig mc = tiny_config({});
    mc.init_scale = 3.0;
    mc.init_seed = static_cast<std::uint64_t>(model) + 1;
    Seq2SeqParser m(mc, few_words(), ten_symbols());
    for (int s = 0; s < 100; ++s) {
      Example ex;
      for (std::size_t i = len(rng); i > 0; --i) ex.utterance.tokens.push_back(pool[pick(rng)]);
      auto r = parse_sentence(m, nullptr, ex, {});
      ASSERT_TRUE(is_valid_tree(r.tree));
      ASSERT_EQ(r.tree.leaves(), ex.utterance.tokens);
      ++decoded;
    }
  }
  EXPECT_EQ(decoded, 10000);
}

std::vector<Example> synth(std::size_t n, std::uint64_t seed, bool coupling = true) {
  SynthConfig sc;
  sc.count = n;
  sc.coupling = coupling;
  return gen_synthetic(sc, seed);
}

TEST(Train, EmptyDatasetIsPreconditionError) {
  EXPECT_THROW(train({}, {}, {}, tiny_config({}), TrainConfig{}), ContractViolation);
  // Prosody models cannot use examples without acoustics.
  auto data = synth(3, 1);
  for (auto& ex : data) {
    ex.has_acoustics = false;
    ex.utterance.alignments.reset();
  }
  EXPECT_THROW(train(data, {}, {}, tiny_config(), TrainConfig{}), ContractViolation);
}

TEST(Train, DeterministicLog) {
  auto data = synth(24, 2);
  auto lex = synthetic_lexicon(SynthConfig{}.grammar, data);
  ModelConfig mc = tiny_config({true, true, false});
  mc.dropout = 0.3;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 3;
  tc.loss_check_interval = 2;
  auto a = train(data, {}, lex, mc, tc);
  auto b = train(data, {}, lex, mc, tc);
  EXPECT_EQ(a.log.intervals, b.log.intervals);
  EXPECT_EQ(a.log.epochs, b.log.epochs);
  EXPECT_EQ(a.model.params().snapshot(), b.model.params().snapshot());
  ASSERT_EQ(a.log.intervals.size(), 9u);
  tc.seed = 2;
  auto c = train(data, {}, lex, mc, tc);
  EXPECT_NE(a.log.epochs, c.log.epochs);
}

TEST(Train, LrIsPowerOfDecay) {
  auto data = synth(40, 3);
  auto lex = synthetic_lexicon(SynthConfig{}.grammar, data);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.max_epochs = 4;
  tc.loss_check_interval = 1;
  tc.lr0 = 0.05;
  auto r = train(data, {}, lex, tiny_config({}), tc);
  double prev = tc.lr0;
  std::vector<double> losses;
  int decays = 0;
  for (const auto& rec : r.log.intervals) {
    losses.push_back(rec.loss);
    const std::size_t i = losses.size() - 1;
    if (i >= 3 && losses[i] > std::max({losses[i - 1], losses[i - 2], losses[i - 3]})) ++decays;
    EXPECT_LE(rec.lr, prev);
    EXPECT_DOUBLE_EQ(rec.lr, tc.lr0 * std::pow(0.9, decays));
    prev = rec.lr;
  }
  EXPECT_GT(decays, 0);
}

TEST(Train, BestDevCheckpointIsRetained) {
  auto data = synth(40, 4), dev = synth(20, 5);
  auto lex = synthetic_lexicon(SynthConfig{}.grammar, data);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 6;
  tc.lr0 = 0.01;
  auto r = train(data, dev, lex, tiny_config({true, false, false}), tc);
  ASSERT_FALSE(r.log.epochs.empty());
  double best = 0.0;
  for (const auto& e : r.log.epochs) best = std::max(best, e.dev_f1);
  EXPECT_EQ(r.log.best_dev_f1, best);
  std::vector<Tree> gold;
  for (const auto& ex : dev) gold.push_back(ex.gold);
  EXPECT_DOUBLE_EQ(parseval(gold, parse_corpus(r.model, nullptr, dev, lex).trees).f1, best);
}

TEST(Train, EarlyStopsAfterPatience) {
  auto data = synth(12, 6);
  auto lex = synthetic_lexicon(SynthConfig{}.grammar, data);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 50;
  tc.patience = 2;
  tc.lr0 = 1e-9;  // nothing improves after the first epoch
  auto r = train(data, {}, lex, tiny_config({}), tc);
  EXPECT_EQ(r.log.epochs.size(), 3u);
  EXPECT_EQ(r.log.best_epoch, 1u);
}

TEST(Train, NonFiniteLossNamesBatch) {
  auto data = synth(8, 7);
  auto lex = synthetic_lexicon(SynthConfig{}.grammar, data);
  for (auto& ex : data) ex.utterance.frames->data.assign(ex.utterance.frames->data.size(),
                                                          std::numeric_limits<double>::quiet_NaN());
  ModelConfig mc = tiny_config({false, false, true});
  TrainConfig tc;
  tc.batch_size = 2;
  try {
    train(data, {}, lex, mc, tc);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos) << e.what();
  }
}

TEST(TrainLog, TsvHasOneRowPerRecord) {
  TrainLog log;
  log.intervals = {{500, 3.5, 0.001}, {1000, 3.1, 0.001}};
  log.epochs = {{1, 1000, 3.2, 55.5, 0.001}};
  log.best_epoch = 1;
  log.best_dev_f1 = 55.5;
  std::ostringstream out;
  log.write_tsv(out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 5u);
  EXPECT_NE(out.str().find("epoch\t1\t3.200000\t55.50"), std::string::npos);
}

}  // namespace
}  // namespace prosparse
