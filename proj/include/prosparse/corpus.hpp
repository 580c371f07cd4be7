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
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "prosparse/error.hpp"
#include "prosparse/text.hpp"
#include "prosparse/tree.hpp"

namespace prosparse {

/// Frame hop of the f0/energy features, seconds.
inline constexpr double kFrameHop = 0.01;
inline constexpr std::size_t kFrameFeatures = 6;
inline constexpr std::size_t kFilterbankBands = 40;
inline constexpr std::size_t kFrameTolerance = 2;

/// Dense row-major matrix of acoustic features.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct TimeSpan {
  double start = 0.0;
  double end = 0.0;
  friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

struct Utterance {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::vector<TimeSpan>> alignments;
  std::optional<Matrix> frames;
  std::string speaker_side;
};

/// Marks a synthetic sentence whose PP attachment is ambiguous from the
/// words alone. Token offsets are into the utterance.
struct AttachmentSite {
  std::size_t object_start = 0;  // first token of the object NP
  std::size_t pp_start = 0;
  std::size_t pp_end = 0;
  bool high = false;  // true: PP attaches to VP; false: to the object NP
  friend bool operator==(const AttachmentSite&, const AttachmentSite&) = default;
};

struct Example {
  Utterance utterance;
  Tree gold;
  bool has_acoustics = false;
  std::optional<AttachmentSite> attachment;
};

// ---------------------------------------------------------------------------
// Treebank

namespace detail {

inline bool is_punctuation_tag(std::string_view tag) {
  static const std::unordered_set<std::string_view> tags = {
      ".", ",", ":", "``", "''", "-LRB-", "-RRB-", "-LCB-", "-RCB-", "HYPH", "NFP"};
  return tags.count(tag) > 0;
}

/// Empty elements and disfluency markers are not words.
inline bool is_dropped_tag(std::string_view tag) {
  return is_punctuation_tag(tag) || tag == "-NONE-" || tag == "-DFL-";
}

/// NP-SBJ-1 -> NP, PP=2 -> PP. Labels beginning with '-' are kept whole.
inline std::string base_label(std::string_view label) {
  if (label.empty() || label.front() == '-') return std::string(label);
  auto cut = label.find_first_of("-=");
  return std::string(label.substr(0, cut));
}

inline std::optional<Tree> preprocess_node(Tree t) {
  if (t.is_leaf()) {
    t.token = text::lower(t.token);
    return t;
  }
  if (t.is_preterminal() && is_dropped_tag(t.label)) return std::nullopt;
  t.label = base_label(t.label);
  std::vector<Tree> kept;
  for (auto& child : t.children) {
    if (auto c = preprocess_node(std::move(child))) kept.push_back(std::move(*c));
  }
  if (kept.empty()) return std::nullopt;
  t.children = std::move(kept);
  return t;
}

}  // namespace detail

/// Lower-cases tokens, removes punctuation and empty-element pre-terminals,
/// prunes constituents left empty, and strips function tags.
inline std::optional<Tree> preprocess_tree(Tree t) {
  auto out = detail::preprocess_node(std::move(t));
  if (out) out->assign_spans();
  return out;
}

struct TreebankEntry {
  std::string id;
  Tree tree;
};

/// One tree per line, optionally prefixed by "id<TAB>". Lines without an id
/// are named "s<line number>". Blank lines are skipped.
inline std::vector<TreebankEntry> read_treebank(std::istream& in, bool preprocess = true) {
  std::vector<TreebankEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = text::trim(line);
    if (view.empty()) continue;
    std::string id = "s" + std::to_string(lineno);
    if (auto tab = view.find('\t'); tab != std::string_view::npos) {
      id = std::string(text::trim(view.substr(0, tab)));
      view = text::trim(view.substr(tab + 1));
    }
    if (view.empty()) throw ParseError("empty tree at line " + std::to_string(lineno));
    Tree t = parse_bracketed(view, lineno);
    if (preprocess) {
      auto p = preprocess_tree(std::move(t));
      if (!p) throw ParseError("empty tree after preprocessing at line " + std::to_string(lineno));
      t = std::move(*p);
    }
    out.push_back({std::move(id), std::move(t)});
  }
  return out;
}

inline std::vector<TreebankEntry> load_treebank(const std::string& path, bool preprocess = true) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open treebank " + path);
  return read_treebank(in, preprocess);
}

inline void write_treebank(std::ostream& out, std::span<const TreebankEntry> entries) {
  for (const auto& e : entries) out << e.id << '\t' << to_bracketed(e.tree) << '\n';
}

// ---------------------------------------------------------------------------
// Word alignments

struct WordTime {
  std::size_t index = 0;
  double start = 0.0;
  double end = 0.0;
};

using AlignmentTable = std::map<std::string, std::vector<WordTime>>;

/// `id \t token_index \t start_s \t end_s`. Per-utterance lists come back
/// sorted by token index. Utterances absent from the table are the backoff
/// case and are handled at assembly.
inline AlignmentTable read_alignments(std::istream& in) {
  AlignmentTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto f = text::split(text::trim(line), '\t');
    std::string where = "alignment line " + std::to_string(lineno);
    if (f.size() != 4) throw FormatError("expected 4 fields in " + where);
    WordTime w{text::to_size(f[1], where), text::to_double(f[2], where), text::to_double(f[3], where)};
    std::string id(f[0]);
    if (w.start < 0 || w.end < 0 || w.end < w.start)
      throw DataError("invalid times for " + id + " token " + std::to_string(w.index) + " in " + where);
    table[id].push_back(w);
  }
  for (auto& [id, words] : table) {
    std::sort(words.begin(), words.end(),
              [](const WordTime& a, const WordTime& b) { return a.index < b.index; });
    for (std::size_t i = 1; i < words.size(); ++i) {
      if (words[i].index == words[i - 1].index)
        throw DataError("duplicate token index " + std::to_string(words[i].index) + " for " + id);
      if (words[i].start < words[i - 1].start)
        throw DataError("decreasing start time at token " + std::to_string(words[i].index) + " for " + id);
    }
  }
  return table;
}

inline AlignmentTable load_alignments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open alignments " + path);
  return read_alignments(in);
}

/// Complete alignment for a sentence of `num_tokens` words, or nullopt when
/// any word boundary is missing.
inline std::optional<std::vector<TimeSpan>> complete_alignment(const AlignmentTable& table,
                                                               const std::string& id,
                                                               std::size_t num_tokens) {
  auto it = table.find(id);
  if (it == table.end() || it->second.size() != num_tokens) return std::nullopt;
  std::vector<TimeSpan> spans;
  spans.reserve(num_tokens);
  for (std::size_t i = 0; i < num_tokens; ++i) {
    const auto& w = it->second[i];
    if (w.index != i) return std::nullopt;
    spans.push_back({w.start, w.end});
  }
  return spans;
}

inline void write_alignments(std::ostream& out, const std::string& id, std::span<const TimeSpan> spans) {
  for (std::size_t i = 0; i < spans.size(); ++i)
    out << id << '\t' << i << '\t' << text::fmt(spans[i].start, 3) << '\t' << text::fmt(spans[i].end, 3) << '\n';
}

// ---------------------------------------------------------------------------
// Frame features

using FrameTable = std::map<std::string, Matrix>;

/// Reads `id \t frame_index \t v1..vN` records with exactly `width` values.
inline FrameTable read_frame_records(std::istream& in, std::size_t width, const std::string& kind) {
  std::map<std::string, std::vector<std::pair<std::size_t, std::vector<double>>>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto f = text::split(text::trim(line), '\t');
    std::string where = kind + " line " + std::to_string(lineno);
    if (f.size() != width + 2)
      throw FormatError("expected " + std::to_string(width) + " feature values, got " +
                        std::to_string(f.size() < 2 ? 0 : f.size() - 2) + " in " + where);
    std::vector<double> values;
    values.reserve(width);
    for (std::size_t k = 0; k < width; ++k) values.push_back(text::to_double(f[k + 2], where));
    rows[std::string(f[0])].emplace_back(text::to_size(f[1], where), std::move(values));
  }
  FrameTable table;
  for (auto& [id, recs] : rows) {
    std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    Matrix m(recs.size(), width);
    for (std::size_t r = 0; r < recs.size(); ++r) {
      if (recs[r].first != r) throw FormatError("non-contiguous frame index " + std::to_string(recs[r].first) + " for " + id);
      std::copy(recs[r].second.begin(), recs[r].second.end(), m.data.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
    table.emplace(id, std::move(m));
  }
  return table;
}

/// Feature order: NCCF, POV-weighted log-pitch, delta-log-pitch, E_total,
/// E_low, E_high.
inline FrameTable load_frames(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open frames " + path);
  return read_frame_records(in, kFrameFeatures, "frame");
}

inline FrameTable load_filterbank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open filterbank " + path);
  return read_frame_records(in, kFilterbankBands, "filterbank");
}

inline void write_frame_records(std::ostream& out, const std::string& id, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    out << id << '\t' << r;
    for (std::size_t c = 0; c < m.cols; ++c) out << '\t' << text::fmt(m(r, c));
    out << '\n';
  }
}

/// Number of 10 ms frames covering `duration` seconds.
inline std::size_t expected_frames(double duration) {
  return static_cast<std::size_t>(std::llround(duration / kFrameHop));
}

/// Throws ConsistencyError unless the row count is within the frame
/// tolerance of the utterance duration.
inline void validate_frames(const Matrix& frames, double duration, const std::string& id) {
  if (frames.cols != kFrameFeatures)
    throw FormatError("frames for " + id + " have " + std::to_string(frames.cols) + " features");
  std::size_t want = expected_frames(duration);
  std::size_t diff = frames.rows > want ? frames.rows - want : want - frames.rows;
  if (diff > kFrameTolerance)
    throw ConsistencyError("utterance " + id + " has " + std::to_string(frames.rows) + " frames, expected " +
                           std::to_string(want) + " +/- " + std::to_string(kFrameTolerance));
}

// ---------------------------------------------------------------------------
// Energy features

/// Largest per-frame total energy across a speaker side's filterbanks.
inline double speaker_max_total(std::span<const Matrix* const> fbanks) {
  double best = 0.0;
  for (const Matrix* m : fbanks) {
    for (std::size_t r = 0; r < m->rows; ++r) {
      double s = 0.0;
      for (double v : m->row(r)) s += v;
      best = std::max(best, s);
    }
  }
  return best;
}

/// [T x 40] mel-band energies -> [T x 3] (E_total, E_low, E_high).
inline Matrix compute_energy_features(const Matrix& fbank, double speaker_max) {
  if (fbank.cols != kFilterbankBands)
    throw FormatError("filterbank frames need 40 bands, got " + std::to_string(fbank.cols));
  if (!(speaker_max > 0)) throw DomainError("speaker max total energy must be positive");
  Matrix out(fbank.rows, 3);
  const std::size_t half = kFilterbankBands / 2;
  for (std::size_t r = 0; r < fbank.rows; ++r) {
    double low = 0.0, high = 0.0;
    for (std::size_t b = 0; b < kFilterbankBands; ++b) {
      double e = fbank(r, b);
      if (!(e > 0)) throw DomainError("nonpositive band energy at frame " + std::to_string(r));
      (b < half ? low : high) += e;
    }
    double total = low + high;
    out(r, 0) = std::log(total / speaker_max);
    out(r, 1) = std::log(low / total);
    out(r, 2) = std::log(high / total);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assembly

/// Joins trees with alignments and frames. A sentence without a complete
/// alignment gets has_acoustics = false. Frames, when present for an aligned
/// sentence, must agree with its duration.
inline std::vector<Example> assemble_examples(std::span<const TreebankEntry> trees, const AlignmentTable& alignments,
                                              const FrameTable& frames) {
  std::vector<Example> out;
  out.reserve(trees.size());
  for (const auto& entry : trees) {
    Example ex;
    ex.gold = entry.tree;
    ex.utterance.id = entry.id;
    ex.utterance.tokens = entry.tree.leaves();
    ex.utterance.speaker_side = entry.id;
    ex.utterance.alignments = complete_alignment(alignments, entry.id, ex.utterance.tokens.size());
    ex.has_acoustics = ex.utterance.alignments.has_value();
    if (ex.has_acoustics) {
      if (auto it = frames.find(entry.id); it != frames.end()) {
        validate_frames(it->second, ex.utterance.alignments->back().end, entry.id);
        ex.utterance.frames = it->second;
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace prosparse
