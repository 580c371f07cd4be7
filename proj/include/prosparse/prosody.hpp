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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prosparse/corpus.hpp"
#include "prosparse/error.hpp"
#include "prosparse/text.hpp"

namespace prosparse {

/// Six pause classes shared by the pre- and post-word pause embeddings.
enum class PauseCategory : std::uint8_t {
  kOff = 0,           // no pause
  kNotAvailable = 1,  // missing time, or a sentence edge
  kUpTo50ms = 2,      // (0, 0.05]
  kUpTo200ms = 3,     // (0.05, 0.2]
  kUpTo1s = 4,        // (0.2, 1]
  kOver1s = 5,        // > 1
};

inline constexpr std::size_t kNumPauseCategories = 6;
inline constexpr double kMaxDurationRatio = 5.0;
inline constexpr std::size_t kFrequentWordCount = 15;

inline std::string_view pause_name(PauseCategory c) {
  switch (c) {
    case PauseCategory::kOff: return "off";
    case PauseCategory::kNotAvailable: return "na";
    case PauseCategory::kUpTo50ms: return "le0.05";
    case PauseCategory::kUpTo200ms: return "le0.2";
    case PauseCategory::kUpTo1s: return "le1";
    case PauseCategory::kOver1s: return "gt1";
  }
  return "?";
}

inline PauseCategory bucket_pause(std::optional<double> gap) {
  if (!gap) return PauseCategory::kNotAvailable;
  double p = *gap;
  if (p < 0 || std::isnan(p)) throw DomainError("negative pause duration " + std::to_string(p));
  if (p == 0) return PauseCategory::kOff;
  if (p <= 0.05) return PauseCategory::kUpTo50ms;
  if (p <= 0.2) return PauseCategory::kUpTo200ms;
  if (p <= 1.0) return PauseCategory::kUpTo1s;
  return PauseCategory::kOver1s;
}

struct WordStat {
  double mean = 0.0;
  std::size_t count = 0;
};

/// Mean word durations: sample means for frequent words, phone-sum
/// estimates for the rest.
struct DurationLexicon {
  std::map<std::string, WordStat> word_means;
  std::map<std::string, double> phoneme_means;
  std::map<std::string, std::vector<std::string>> pronunciations;

  /// Mean over all word entries; used for words the lexicon cannot cover.
  double global_mean() const {
    if (word_means.empty()) return 0.25;
    double s = 0.0;
    for (const auto& [w, st] : word_means) s += st.mean;
    return s / static_cast<double>(word_means.size());
  }

  std::optional<double> phone_sum(const std::string& word) const {
    auto it = pronunciations.find(word);
    if (it == pronunciations.end() || it->second.empty()) return std::nullopt;
    double s = 0.0;
    for (const auto& ph : it->second) {
      auto p = phoneme_means.find(ph);
      if (p == phoneme_means.end()) return std::nullopt;
      s += p->second;
    }
    return s;
  }

  /// Sample mean when seen at least 15 times, else the pronunciation
  /// estimate, else the (infrequent) sample mean, else the global mean.
  double mean_for(const std::string& word) const {
    auto w = word_means.find(word);
    if (w != word_means.end() && w->second.count >= kFrequentWordCount) return w->second.mean;
    if (auto ph = phone_sum(word)) return *ph;
    if (w != word_means.end() && w->second.mean > 0) return w->second.mean;
    std::clog << "prosody: no duration mean for '" << word << "', using global mean\n";
    return global_mean();
  }

  void validate() const {
    for (const auto& [w, st] : word_means)
      if (!(st.mean > 0)) throw DataError("lexicon mean for word '" + w + "' must be positive");
    for (const auto& [p, m] : phoneme_means)
      if (!(m > 0)) throw DataError("lexicon mean for phone '" + p + "' must be positive");
  }
};

/// Lines: `word \t mean_s \t count`, `#phone \t phone \t mean_s`,
/// `#pron \t word \t p1 p2 ...`.
inline DurationLexicon read_lexicon(std::istream& in) {
  DurationLexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::trim(line);
    if (view.empty()) continue;
    auto f = text::split(view, '\t');
    std::string where = "lexicon line " + std::to_string(lineno);
    if (f[0] == "#phone") {
      if (f.size() != 3) throw FormatError("expected 3 fields in " + where);
      lex.phoneme_means[std::string(f[1])] = text::to_double(f[2], where);
    } else if (f[0] == "#pron") {
      if (f.size() != 3) throw FormatError("expected 3 fields in " + where);
      auto& pron = lex.pronunciations[std::string(f[1])];
      for (auto p : text::split_ws(f[2])) pron.emplace_back(p);
    } else {
      if (f.size() != 3) throw FormatError("expected 3 fields in " + where);
      lex.word_means[std::string(f[0])] = {text::to_double(f[1], where), text::to_size(f[2], where)};
    }
  }
  lex.validate();
  return lex;
}

inline DurationLexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon " + path);
  return read_lexicon(in);
}

inline void write_lexicon(std::ostream& out, const DurationLexicon& lex) {
  for (const auto& [w, st] : lex.word_means) out << w << '\t' << text::fmt(st.mean) << '\t' << st.count << '\n';
  for (const auto& [p, m] : lex.phoneme_means) out << "#phone\t" << p << '\t' << text::fmt(m) << '\n';
  for (const auto& [w, pron] : lex.pronunciations) {
    out << "#pron\t" << w << '\t';
    for (std::size_t i = 0; i < pron.size(); ++i) out << (i ? " " : "") << pron[i];
    out << '\n';
  }
}

/// Word duration over its expected duration, clipped at 5.
inline double duration_feature(const std::string& word, double actual, const DurationLexicon& lexicon) {
  if (!(actual > 0)) throw DomainError("word duration must be positive for '" + word + "'");
  return std::min(actual / lexicon.mean_for(word), kMaxDurationRatio);
}

/// Frame rows [floor((start - context) / hop), ceil((end + context) / hop))
/// clamped to the matrix. Slices shorter than `min_rows` are zero-padded
/// symmetrically (extra row on the right).
inline Matrix word_frame_slice(const Matrix& frames, TimeSpan word, double context, std::size_t min_rows = 1) {
  constexpr double kSnap = 1e-6;
  const auto total = static_cast<std::int64_t>(frames.rows);
  auto first = static_cast<std::int64_t>(std::floor((word.start - context) / kFrameHop + kSnap));
  auto last = static_cast<std::int64_t>(std::ceil((word.end + context) / kFrameHop - kSnap));
  first = std::clamp<std::int64_t>(first, 0, total);
  last = std::clamp<std::int64_t>(last, first, total);
  const auto len = static_cast<std::size_t>(last - first);
  const std::size_t rows = std::max({len, min_rows, std::size_t{1}});
  const std::size_t cols = frames.cols == 0 ? kFrameFeatures : frames.cols;
  Matrix out(rows, cols);
  const std::size_t pad = (rows - len) / 2;
  for (std::size_t r = 0; r < len; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(pad + r, c) = frames(static_cast<std::size_t>(first) + r, c);
  return out;
}

/// Word-level acoustic inputs for one token.
struct ProsodicInput {
  PauseCategory pause_pre = PauseCategory::kNotAvailable;
  PauseCategory pause_post = PauseCategory::kNotAvailable;
  double delta = 1.0;
  Matrix frames;
};

struct ProsodyOptions {
  double context = 0.25;      // seconds of frame context on each side of a word
  std::size_t min_frames = 1;  // pad slices to the widest CNN filter
};

/// One ProsodicInput per token. Throws BackoffRequired when the example has
/// no time alignment. Without frames the CNN input is all zeros.
inline std::vector<ProsodicInput> build_prosodic_inputs(const Example& ex, const DurationLexicon& lexicon,
                                                        const ProsodyOptions& opts = {}) {
  if (!ex.has_acoustics || !ex.utterance.alignments)
    throw BackoffRequired("utterance " + ex.utterance.id + " has no time alignment");
  const auto& tokens = ex.utterance.tokens;
  const auto& times = *ex.utterance.alignments;
  if (times.size() != tokens.size())
    throw DataError("utterance " + ex.utterance.id + " alignment/token count mismatch");
  const std::size_t n = tokens.size();
  std::vector<PauseCategory> boundary(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i + 1 < n; ++i) boundary[i] = bucket_pause(std::max(0.0, times[i + 1].start - times[i].end));

  static const Matrix kNoFrames;
  const Matrix& frames = ex.utterance.frames ? *ex.utterance.frames : kNoFrames;
  std::vector<ProsodicInput> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = out[i];
    p.pause_pre = i == 0 ? PauseCategory::kNotAvailable : boundary[i - 1];
    p.pause_post = i + 1 == n ? PauseCategory::kNotAvailable : boundary[i];
    p.delta = duration_feature(tokens[i], std::max(times[i].end - times[i].start, kFrameHop), lexicon);
    p.frames = word_frame_slice(frames, times[i], opts.context, opts.min_frames);
  }
  return out;
}

}  // namespace prosparse
