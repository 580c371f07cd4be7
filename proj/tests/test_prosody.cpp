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
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "prosparse/prosody.hpp"
#include "prosparse/synth.hpp"

namespace prosparse {
namespace {

TEST(BucketPause, BoundariesAreInclusiveAbove) {
  EXPECT_EQ(bucket_pause(0.0), PauseCategory::kOff);
  EXPECT_EQ(bucket_pause(0.05), PauseCategory::kUpTo50ms);
  EXPECT_EQ(bucket_pause(0.2), PauseCategory::kUpTo200ms);
  EXPECT_EQ(bucket_pause(1.0), PauseCategory::kUpTo1s);
  EXPECT_EQ(bucket_pause(1.0 + 1e-9), PauseCategory::kOver1s);
  EXPECT_EQ(bucket_pause(1.5), PauseCategory::kOver1s);
  EXPECT_EQ(bucket_pause(std::nullopt), PauseCategory::kNotAvailable);
  EXPECT_EQ(bucket_pause(std::nextafter(0.05, 1.0)), PauseCategory::kUpTo200ms);
  EXPECT_EQ(bucket_pause(1e-12), PauseCategory::kUpTo50ms);
}

TEST(BucketPause, NegativeGapIsDomainError) {
  EXPECT_THROW(bucket_pause(-0.01), DomainError);
  EXPECT_THROW(bucket_pause(std::numeric_limits<double>::quiet_NaN()), DomainError);
}

TEST(BucketPause, MonotoneOverDurations) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 10000; ++i) {
    double a = u(rng), b = u(rng);
    if (i % 10 == 0) a = 0.0;
    if (a > b) std::swap(a, b);
    EXPECT_LE(static_cast<int>(bucket_pause(a)), static_cast<int>(bucket_pause(b)));
    EXPECT_NE(bucket_pause(a), PauseCategory::kNotAvailable);
  }
}

DurationLexicon cat_lexicon() {
  DurationLexicon lex;
  lex.word_means["the"] = {0.25, 100};
  lex.word_means["rare"] = {0.4, 3};
  lex.phoneme_means = {{"k", 0.08}, {"ae", 0.10}, {"t", 0.07}};
  lex.pronunciations["cat"] = {"k", "ae", "t"};
  lex.pronunciations["rare"] = {"k", "t"};
  return lex;
}

TEST(Duration, IdentityRatio) {
  EXPECT_DOUBLE_EQ(duration_feature("the", 0.25, cat_lexicon()), 1.0);
}

TEST(Duration, ClippedAtFive) {
  EXPECT_EQ(duration_feature("the", 1.5, cat_lexicon()), 5.0);
  EXPECT_EQ(duration_feature("the", 1.25, cat_lexicon()), 5.0);
}

TEST(Duration, PhonemeSumForRareWord) {
  EXPECT_DOUBLE_EQ(duration_feature("cat", 0.5, cat_lexicon()), 0.5 / (0.08 + 0.10 + 0.07));
  EXPECT_NEAR(duration_feature("cat", 0.5, cat_lexicon()), 2.0, 1e-12);
}

TEST(Duration, InfrequentSampleMeanLosesToPronunciation) {
  EXPECT_NEAR(duration_feature("rare", 0.3, cat_lexicon()), 0.3 / 0.15, 1e-12);
}

TEST(Duration, UnknownWordUsesGlobalMean) {
  auto lex = cat_lexicon();
  const double global = (0.25 + 0.4) / 2;
  EXPECT_NEAR(duration_feature("zebra", 0.65, lex), 0.65 / global, 1e-12);
}

TEST(Duration, NonpositiveActualIsDomainError) {
  EXPECT_THROW(duration_feature("the", 0.0, cat_lexicon()), DomainError);
}

TEST(Lexicon, FileRoundTrip) {
  std::ostringstream out;
  write_lexicon(out, cat_lexicon());
  std::istringstream in(out.str());
  auto lex = read_lexicon(in);
  EXPECT_EQ(lex.word_means.size(), 2u);
  EXPECT_EQ(lex.word_means.at("the").count, 100u);
  EXPECT_EQ(lex.pronunciations.at("cat"), (std::vector<std::string>{"k", "ae", "t"}));
  EXPECT_DOUBLE_EQ(lex.phoneme_means.at("ae"), 0.10);
}

TEST(Lexicon, NonpositiveMeanRejected) {
  std::istringstream in("the\t0\t20\n");
  EXPECT_ANY_THROW(read_lexicon(in));
}

Matrix numbered_frames(std::size_t rows) {
  Matrix m(rows, kFrameFeatures);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < kFrameFeatures; ++c) m(r, c) = static_cast<double>(r) + 1.0;
  return m;
}

TEST(FrameSlice, WordWithoutContext) {
  Matrix s = word_frame_slice(numbered_frames(100), {0.10, 0.35}, 0.0);
  EXPECT_EQ(s.rows, 25u);
  EXPECT_EQ(s(0, 0), 11.0);
  EXPECT_EQ(s(24, 0), 35.0);
}

TEST(FrameSlice, LeftEdgeClamped) {
  Matrix s = word_frame_slice(numbered_frames(100), {0.0, 0.2}, 0.25);
  EXPECT_EQ(s(0, 0), 1.0);
  EXPECT_EQ(s.rows, 45u);
}

TEST(FrameSlice, RightEdgeClamped) {
  Matrix s = word_frame_slice(numbered_frames(50), {0.3, 0.5}, 0.25);
  EXPECT_EQ(s.rows, 50u - 5u);
  EXPECT_EQ(s(s.rows - 1, 0), 50.0);
}

TEST(FrameSlice, ShortWordPaddedSymmetrically) {
  Matrix s = word_frame_slice(numbered_frames(100), {0.10, 0.18}, 0.0, 50);
  ASSERT_EQ(s.rows, 50u);
  std::size_t nonzero = 0, first = s.rows;
  for (std::size_t r = 0; r < s.rows; ++r)
    if (s(r, 0) != 0.0) {
      ++nonzero;
      first = std::min(first, r);
    }
  EXPECT_EQ(nonzero, 8u);
  EXPECT_EQ(first, 21u);
  EXPECT_EQ(s(21, 0), 11.0);
}

TEST(FrameSlice, ConsecutiveWordsTile) {
  Matrix f = numbered_frames(200);
  const std::vector<TimeSpan> words = {{0.0, 0.23}, {0.23, 0.61}, {0.61, 0.9}, {0.9, 1.37}};
  std::size_t covered = 0;
  double last = 0.0;
  for (const auto& w : words) {
    Matrix s = word_frame_slice(f, w, 0.0);
    covered += s.rows;
    EXPECT_GE(s(0, 0), last);
    last = s(s.rows - 1, 0);
  }
  EXPECT_LE(covered, 137u + words.size());
  EXPECT_GE(covered, 137u);
}

Example two_word_example() {
  Example ex;
  ex.utterance.id = "u1";
  ex.utterance.tokens = {"the", "cat"};
  ex.utterance.alignments = std::vector<TimeSpan>{{0.05, 0.30}, {0.42, 0.67}};
  ex.utterance.frames = numbered_frames(67);
  ex.has_acoustics = true;
  ex.gold = parse_bracketed("(NP (DT the) (NN cat))");
  return ex;
}

TEST(ProsodicInputs, SharedBoundary) {
  auto p = build_prosodic_inputs(two_word_example(), cat_lexicon(), {0.0, 1});
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].pause_pre, PauseCategory::kNotAvailable);
  EXPECT_EQ(p[0].pause_post, PauseCategory::kUpTo200ms);
  EXPECT_EQ(p[1].pause_pre, PauseCategory::kUpTo200ms);
  EXPECT_EQ(p[1].pause_post, PauseCategory::kNotAvailable);
  EXPECT_NEAR(p[0].delta, 1.0, 1e-12);
  EXPECT_NEAR(p[1].delta, 1.0, 1e-12);
}

TEST(ProsodicInputs, SingleToken) {
  Example ex;
  ex.utterance.tokens = {"yeah"};
  ex.utterance.alignments = std::vector<TimeSpan>{{0.0, 0.3}};
  ex.has_acoustics = true;
  auto p = build_prosodic_inputs(ex, cat_lexicon());
  EXPECT_EQ(p[0].pause_pre, PauseCategory::kNotAvailable);
  EXPECT_EQ(p[0].pause_post, PauseCategory::kNotAvailable);
}

TEST(ProsodicInputs, MissingAlignmentSignalsBackoff) {
  Example ex = two_word_example();
  ex.has_acoustics = false;
  ex.utterance.alignments.reset();
  EXPECT_THROW(build_prosodic_inputs(ex, cat_lexicon()), BackoffRequired);
}

TEST(ProsodicInputs, PaddedToWidestFilter) {
  auto p = build_prosodic_inputs(two_word_example(), cat_lexicon(), {0.0, 50});
  for (const auto& w : p) EXPECT_EQ(w.frames.rows, 50u);
}

TEST(ProsodicInputs, SyntheticDeltaIsOneWithoutJitter) {
  SynthConfig cfg;
  auto ex = gen_synthetic(cfg, 13);
  auto lex = synthetic_lexicon(cfg.grammar, ex);
  for (const auto& e : ex) {
    auto p = build_prosodic_inputs(e, lex);
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_NEAR(p[i].delta, 1.0, 1e-9) << e.utterance.tokens[i];
      if (i + 1 < p.size()) {
        EXPECT_EQ(p[i].pause_post, p[i + 1].pause_pre);
      }
    }
  }
}

}  // namespace
}  // namespace prosparse
