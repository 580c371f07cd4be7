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
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "prosparse/autodiff/gradcheck.hpp"
#include "prosparse/checkpoint.hpp"
#include "prosparse/model.hpp"
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

void zero_all(Seq2SeqParser& m) {
  for (const auto& [name, t] : m.params().entries()) fill(t, 0.0);
}

Tensor random_column(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor::from(n, 1, v);
}

FeatureFlags flags_from_bits(int bits) { return {(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0}; }

TEST(ModelConfig, DefaultInputWidths) {
  ModelConfig c;
  EXPECT_EQ(c.input_width(), 512u);
  c.features = {true, true, true};
  EXPECT_EQ(c.input_width(), 625u);
}

TEST(ModelConfig, InputWidthMatchesEncoderWeights) {
  for (int bits = 0; bits < 8; ++bits) {
    ModelConfig c = tiny_config(flags_from_bits(bits));
    Seq2SeqParser m(c, few_words(), ten_symbols());
    const std::size_t expect = c.word_embed_dim + (c.features.pause ? 2 * c.pause_embed_dim : 0) +
                               (c.features.duration ? 1 : 0) +
                               (c.features.cnn ? c.cnn_filter_widths.size() * c.cnn_filters : 0);
    EXPECT_EQ(c.input_width(), expect);
    EXPECT_EQ(m.params().get("encoder.l0.W").cols(), expect + c.hidden);
    EXPECT_EQ(m.params().contains("embed.pause"), c.features.pause);
    EXPECT_EQ(m.params().contains("cnn.w2.filters"), c.features.cnn);
    auto in = make_parser_input(two_word_example(), m, small_lexicon());
    EXPECT_EQ(m.assemble_input(1, in.prosody ? &(*in.prosody)[0] : nullptr).rows(), expect);
  }
}

TEST(ModelConfig, KeyValueRoundTrip) {
  ModelConfig c = tiny_config();
  c.attention = AttentionKind::kContent;
  ModelConfig back = ModelConfig::from(c.to_kv());
  EXPECT_EQ(back.to_kv().entries(), c.to_kv().entries());
}

TEST(ModelConfig, ViolationNamesField) {
  KeyValueConfig kv;
  kv.set("hidden", "0");
  try {
    ModelConfig::from(kv);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("hidden"), std::string::npos);
  }
  kv = {};
  kv.set("dropout", "1.5");
  EXPECT_THROW(ModelConfig::from(kv), ConfigError);
  kv = {};
  kv.set("features", "pause,loudness");
  EXPECT_THROW(ModelConfig::from(kv), ConfigError);
}

TEST(Vocabulary, Builders) {
  auto words = build_word_vocabulary({{"b", "a"}, {"a", "c"}});
  EXPECT_EQ(words.items(), (std::vector<std::string>{"<unk>", "a", "b", "c"}));
  auto syms = build_symbol_vocabulary({parse_bracketed("(S (NP (PRP i)) (VP (VBP know)))")});
  EXPECT_EQ(syms.items(), (std::vector<std::string>{"<s>", "</s>", ")", "XX", "(NP", "(S", "(VP"}));
}

TEST(Vocabulary, UnknownParseSymbolIsVocabularyError) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  EXPECT_THROW(m.target_ids(parse_linear("(S (ADJP XX ) )")), VocabularyError);
  auto ids = m.target_ids(parse_linear("(S XX )"));
  EXPECT_EQ(ids.back(), kEndId);
  EXPECT_EQ(ids.size(), 4u);
}

TEST(Model, TextOnlyAllocatesNoProsodyParameters) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  for (const auto& [name, t] : m.params().entries()) {
    EXPECT_FALSE(name.starts_with("cnn.")) << name;
    EXPECT_NE(name, "embed.pause");
  }
}

// Every model quantity maps to a named tensor of the expected shape.
TEST(Model, ParameterManifest) {
  ModelConfig c = tiny_config();
  Seq2SeqParser m(c, few_words(), ten_symbols());
  const std::size_t H = c.hidden, V = 10;
  struct Row {
    const char* name;
    std::size_t rows, cols;
  };
  const std::vector<Row> expected = {
      {"embed.word", 6, c.word_embed_dim},
      {"embed.pause", kNumPauseCategories, c.pause_embed_dim},
      {"cnn.w2.filters", c.cnn_filters, 2 * kFrameFeatures},
      {"cnn.w2.bias", c.cnn_filters, 1},
      {"cnn.w4.filters", c.cnn_filters, 4 * kFrameFeatures},
      {"cnn.w4.bias", c.cnn_filters, 1},
      {"encoder.l0.W", 4 * H, c.input_width() + H},
      {"encoder.l0.b", 4 * H, 1},
      {"encoder.l1.W", 4 * H, 2 * H},
      {"encoder.l1.b", 4 * H, 1},
      {"embed.symbol", V, c.output_embed_dim},
      {"decoder.l0.W", 4 * H, c.output_embed_dim + 2 * H},
      {"decoder.l0.b", 4 * H, 1},
      {"decoder.l1.W", 4 * H, 2 * H},
      {"decoder.l1.b", 4 * H, 1},
      {"attention.W1", H, H},
      {"attention.W2", H, H},
      {"attention.b_a", H, 1},
      {"attention.v", 1, H},
      {"attention.F", c.location_filters, c.location_width},
      {"attention.W_f", H, c.location_filters},
      {"output.W_s", V, 2 * H},
      {"output.b_s", V, 1},
  };
  ASSERT_EQ(m.params().count(), expected.size());
  for (const auto& r : expected) {
    ASSERT_TRUE(m.params().contains(r.name)) << r.name;
    EXPECT_EQ(m.params().get(r.name).rows(), r.rows) << r.name;
    EXPECT_EQ(m.params().get(r.name).cols(), r.cols) << r.name;
  }
}

TEST(Model, ContentAttentionHasNoLocationParameters) {
  ModelConfig c = tiny_config({});
  c.attention = AttentionKind::kContent;
  Seq2SeqParser m(c, few_words(), ten_symbols());
  EXPECT_FALSE(m.params().contains("attention.F"));
  EXPECT_FALSE(m.params().contains("attention.W_f"));
}

TEST(Model, ForgetBiasStartsAtOne) {
  ModelConfig c = tiny_config({});
  Seq2SeqParser m(c, few_words(), ten_symbols());
  auto b = m.params().get("decoder.l1.b").values();
  for (std::size_t i = 0; i < 4 * c.hidden; ++i) EXPECT_EQ(b[i], (i >= c.hidden && i < 2 * c.hidden) ? 1.0 : 0.0);
}

TEST(AcousticCnn, FortyEightFilters) {
  ModelConfig c;
  c.hidden = 4;
  c.layers = 1;
  c.word_embed_dim = 4;
  c.output_embed_dim = 4;
  c.features = {false, false, true};
  Seq2SeqParser m(c, few_words(), ten_symbols());
  EXPECT_EQ(m.acoustic_cnn(Matrix(50, 6)).rows(), 48u);
}

TEST(AcousticCnn, ZeroFramesGiveZero) {
  Seq2SeqParser m(tiny_config(), few_words(), ten_symbols());
  Tensor s = m.acoustic_cnn(Matrix(10, 6));
  for (double v : s.values()) EXPECT_EQ(v, 0.0);
}

TEST(AcousticCnn, DoublingFramesDoublesOutput) {
  Seq2SeqParser m(tiny_config(), few_words(), ten_symbols());
  Matrix f = *two_word_example().utterance.frames;
  Matrix g = f;
  for (auto& x : g.data) x *= 2.0;
  Tensor a = m.acoustic_cnn(f), b = m.acoustic_cnn(g);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 2.0 * a[i], 1e-12);
}

TEST(AssembleInput, UnknownTokenUsesUnkEmbedding) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  EXPECT_EQ(m.word_id("zebra"), kUnknownWordId);
  Tensor x = m.assemble_input(m.word_id("zebra"), nullptr);
  auto table = m.params().get("embed.word");
  for (std::size_t j = 0; j < x.size(); ++j) EXPECT_EQ(x[j], table(0, j));
}

TEST(AssembleInput, MissingProsodyIsContractViolation) {
  Seq2SeqParser m(tiny_config({true, false, false}), few_words(), ten_symbols());
  EXPECT_THROW(m.assemble_input(1, nullptr), ContractViolation);
  ParserInput in{{"i", "know"}, std::nullopt};
  EXPECT_THROW(m.embed_inputs(in), ContractViolation);
}

TEST(Encode, SingleWord) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  auto enc = m.encode(m.embed_inputs({{"dog"}, std::nullopt}));
  EXPECT_EQ(enc.length(), 1u);
  EXPECT_EQ(enc.h.rows(), 8u);
}

TEST(Encode, ZeroParametersGiveZero) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  zero_all(m);
  auto enc = m.encode(m.embed_inputs({{"the", "dog", "saw"}, std::nullopt}));
  for (double v : enc.h.values()) EXPECT_EQ(v, 0.0);
}

TEST(Encode, OrderSensitive) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  auto a = m.encode(m.embed_inputs({{"the", "dog", "saw"}, std::nullopt}));
  auto b = m.encode(m.embed_inputs({{"dog", "the", "saw"}, std::nullopt}));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.h.size(); ++i) diff += std::abs(a.h[i] - b.h[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Encode, ReadsRightToLeft) {
  // The last word is read first, so its column depends on nothing before it.
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  auto a = m.encode(m.embed_inputs({{"the", "dog", "saw"}, std::nullopt}));
  auto b = m.encode(m.embed_inputs({{"i", "saw"}, std::nullopt}));
  for (std::size_t r = 0; r < 8; ++r) EXPECT_EQ(a.h(r, 2), b.h(r, 1));
}

EncoderState identical_columns(const Seq2SeqParser& m, std::size_t n) {
  auto enc = m.encode(m.embed_inputs({std::vector<std::string>(n, "dog"), std::nullopt}));
  // Same word everywhere still differs by position; overwrite with one column.
  std::vector<Tensor> cols(n, ad::column(enc.h, 0));
  enc.h = ad::stack_columns(cols);
  enc.keys = ad::matmul(m.params().get("attention.W1"), enc.h);
  return enc;
}

TEST(Attention, IdenticalColumnsGiveThatColumn) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  auto enc = identical_columns(m, 4);
  std::mt19937_64 rng(1);
  auto a = m.attend_content(enc, random_column(8, rng));
  for (std::size_t r = 0; r < 8; ++r) EXPECT_NEAR(a.context[r], enc.h(r, 0), 1e-12);
}

TEST(Attention, ZeroVGivesUniformWeights) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  fill(m.params().get("attention.v"), 0.0);
  auto enc = m.encode(m.embed_inputs({{"the", "dog", "saw", "i", "know"}, std::nullopt}));
  std::mt19937_64 rng(2);
  auto a = m.attend_content(enc, random_column(8, rng));
  for (double w : a.weights.values()) EXPECT_DOUBLE_EQ(w, 0.2);
}

TEST(Attention, LocationWithZeroWfEqualsContent) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  fill(m.params().get("attention.W_f"), 0.0);
  std::mt19937_64 rng(3);
  auto enc = m.encode(m.embed_inputs({{"the", "dog", "saw", "i"}, std::nullopt}));
  for (int trial = 0; trial < 50; ++trial) {
    Tensor d = random_column(8, rng);
    std::vector<double> prev(4);
    double z = 0;
    for (auto& p : prev) z += (p = std::exp(random_column(1, rng)[0]));
    for (auto& p : prev) p /= z;
    auto loc = m.attend_location(enc, d, Tensor::from(1, 4, prev));
    auto con = m.attend_content(enc, d);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(loc.weights[i], con.weights[i]);
    for (std::size_t r = 0; r < 8; ++r) EXPECT_EQ(loc.context[r], con.context[r]);
  }
}

TEST(Attention, LocationFeaturesWithShortInput) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  auto enc = m.encode(m.embed_inputs({{"the", "dog"}, std::nullopt}));
  std::mt19937_64 rng(4);
  auto a = m.attend_location(enc, random_column(8, rng), Tensor::from(1, 2, {0.5, 0.5}));
  EXPECT_EQ(a.location.rows(), 2u);
  EXPECT_EQ(a.location.cols(), 2u);
}

TEST(Attention, WrongPreviousWeightsIsShapeError) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  auto enc = m.encode(m.embed_inputs({{"the", "dog"}, std::nullopt}));
  EXPECT_THROW(m.attend_location(enc, Tensor::zeros(8, 1), Tensor::from(1, 3, {0.2, 0.3, 0.5})), ShapeError);
}

TEST(Decode, DistributionSumsToOneAndIsPure) {
  Seq2SeqParser m(tiny_config(), few_words(), ten_symbols());
  auto ex = two_word_example();
  auto enc = m.encode(m.embed_inputs(make_parser_input(ex, m, small_lexicon())));
  auto s0 = m.initial_decoder_state(enc);
  EXPECT_DOUBLE_EQ(s0.alpha_prev[0], 0.5);
  auto a = m.decode_step(kStartId, s0, enc);
  auto b = m.decode_step(kStartId, s0, enc);
  Tensor p = ad::softmax(a.logits);
  double total = 0;
  for (double v : p.values()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-9);
  for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_EQ(a.logits[i], b.logits[i]);
}

TEST(SequenceLoss, EqualsStepwiseLogLikelihood) {
  Seq2SeqParser m(tiny_config(), few_words(), ten_symbols());
  auto ex = two_word_example();
  auto in = make_parser_input(ex, m, small_lexicon());
  auto gold = m.target_ids(linearize(ex.gold));
  const double loss = m.sequence_loss(in, gold).item();

  auto enc = m.encode(m.embed_inputs(in));
  auto state = m.initial_decoder_state(enc);
  std::size_t prev = kStartId;
  double nll = 0.0;
  for (std::size_t y : gold) {
    auto step = m.decode_step(prev, state, enc);
    auto logits = step.logits.values();
    double mx = *std::max_element(logits.begin(), logits.end()), z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    nll -= logits[y] - mx - std::log(z);
    state = step.state;
    prev = y;
  }
  EXPECT_NEAR(loss, nll, 1e-10);
}

TEST(SequenceLoss, UniformModelClosedForm) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  fill(m.params().get("output.W_s"), 0.0);
  fill(m.params().get("output.b_s"), 0.0);
  auto gold = m.target_ids(parse_linear("(S (NP XX ) (VP XX ) )"));
  EXPECT_NEAR(m.sequence_loss({{"i", "know"}, std::nullopt}, gold).item(), 9 * std::log(10.0), 1e-12);
}

TEST(SequenceLoss, ConfidentModelHasZeroLoss) {
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  zero_all(m);
  auto b = m.params().get("output.b_s");
  b.values()[kEndId] = 800.0;
  EXPECT_NEAR(m.sequence_loss({{"i"}, std::nullopt}, {kEndId}).item(), 0.0, 1e-300);
}

TEST(SequenceLoss, DeterministicWithoutDropout) {
  Seq2SeqParser m(tiny_config(), few_words(), ten_symbols());
  auto ex = two_word_example();
  auto in = make_parser_input(ex, m, small_lexicon());
  auto gold = m.target_ids(linearize(ex.gold));
  const double a = m.sequence_loss(in, gold).item();
  for (int i = 0; i < 3; ++i) EXPECT_EQ(m.sequence_loss(in, gold).item(), a);
}

TEST(SequenceLoss, FullModelGradientCheck) {
  Seq2SeqParser m(tiny_config(), few_words(), ten_symbols());
  auto ex = two_word_example();
  auto in = make_parser_input(ex, m, small_lexicon());
  auto gold = m.target_ids(linearize(ex.gold));
  std::vector<std::pair<std::string, Tensor>> params(m.params().entries().begin(), m.params().entries().end());
  // A loss near 20 leaves ~1e-9 of round-off in each difference at eps 1e-6,
  // which swamps gradients of order 1e-7; the wider step keeps truncation
  // error near 1e-8.
  ad::GradCheckOptions opts;
  opts.epsilon = 1e-4;
  auto r = ad::finite_difference_check([&] { return m.sequence_loss(in, gold); }, params, opts);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_EQ(r.checked, m.params().total_size());
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "prosparse_ckpt_test";
  std::filesystem::remove_all(dir);
  Seq2SeqParser m(tiny_config(), few_words(), ten_symbols());
  save_model(m, dir);
  Seq2SeqParser back = load_model(dir);
  EXPECT_EQ(back.params().snapshot(), m.params().snapshot());
  EXPECT_EQ(back.config().to_kv().entries(), m.config().to_kv().entries());
  EXPECT_EQ(back.symbols().items(), m.symbols().items());
  auto ex = two_word_example();
  auto gold = m.target_ids(linearize(ex.gold));
  EXPECT_EQ(back.sequence_loss(make_parser_input(ex, back, small_lexicon()), gold).item(),
            m.sequence_loss(make_parser_input(ex, m, small_lexicon()), gold).item());
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptMagicRejected) {
  auto dir = std::filesystem::temp_directory_path() / "prosparse_ckpt_bad";
  std::filesystem::remove_all(dir);
  Seq2SeqParser m(tiny_config({}), few_words(), ten_symbols());
  save_model(m, dir);
  {
    std::fstream f(dir / "params.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXXXXXX", 8);
  }
  EXPECT_THROW(load_model(dir), FormatError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace prosparse
