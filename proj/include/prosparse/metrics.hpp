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
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "prosparse/error.hpp"
#include "prosparse/treeops.hpp"
#include "prosparse/tree.hpp"

namespace prosparse {

struct Bracket {
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;
  friend auto operator<=>(const Bracket&, const Bracket&) = default;
};

/// Sorted multiset of labeled spans.
using BracketSet = std::vector<Bracket>;

namespace detail {

inline std::size_t collect_brackets(const Tree& t, std::size_t offset, BracketSet& out) {
  if (t.is_leaf()) return offset + 1;
  const std::size_t start = offset;
  for (const auto& child : t.children) offset = collect_brackets(child, offset, out);
  if (!t.is_preterminal()) out.push_back({t.label, start, offset});
  return offset;
}

}  // namespace detail

/// One bracket per constituent above the pre-terminal level, root included.
/// Labels compare exactly; unary chains yield one bracket per level.
inline BracketSet bracket_set(const Tree& tree) {
  BracketSet out;
  detail::collect_brackets(tree, 0, out);
  std::sort(out.begin(), out.end());
  return out;
}

/// Size of the multiset intersection of two sorted bracket sets.
inline std::size_t matched_brackets(const BracketSet& a, const BracketSet& b) {
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) ++i;
    else if (b[j] < a[i]) ++j;
    else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

struct BracketCounts {
  std::size_t matched = 0;
  std::size_t gold = 0;
  std::size_t pred = 0;

  BracketCounts& operator+=(const BracketCounts& o) {
    matched += o.matched;
    gold += o.gold;
    pred += o.pred;
    return *this;
  }
  friend bool operator==(const BracketCounts&, const BracketCounts&) = default;
};

/// Bracketing precision, recall and F1 in percent.
struct EvalReport {
  BracketCounts counts;
  std::size_t sentences = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t backoff_count = 0;
  std::map<std::string, EvalReport> strata;
};

inline double f1_score(const BracketCounts& c) {
  const double p = c.pred ? 100.0 * static_cast<double>(c.matched) / static_cast<double>(c.pred) : 0.0;
  const double r = c.gold ? 100.0 * static_cast<double>(c.matched) / static_cast<double>(c.gold) : 0.0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

inline EvalReport make_report(const BracketCounts& c, std::size_t sentences) {
  EvalReport r;
  r.counts = c;
  r.sentences = sentences;
  r.precision = c.pred ? 100.0 * static_cast<double>(c.matched) / static_cast<double>(c.pred) : 0.0;
  r.recall = c.gold ? 100.0 * static_cast<double>(c.matched) / static_cast<double>(c.gold) : 0.0;
  r.f1 = f1_score(c);
  return r;
}

/// Per-sentence counts; throws PairingError on length or leaf mismatch.
inline std::vector<BracketCounts> sentence_counts(std::span<const Tree> gold, std::span<const Tree> pred,
                                                  bool flatten = false) {
  if (gold.size() != pred.size())
    throw PairingError("gold has " + std::to_string(gold.size()) + " trees, prediction has " +
                       std::to_string(pred.size()));
  std::vector<BracketCounts> out(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].num_leaves() != pred[i].num_leaves())
      throw PairingError("sentence " + std::to_string(i + 1) + ": gold has " + std::to_string(gold[i].num_leaves()) +
                         " words, prediction has " + std::to_string(pred[i].num_leaves()));
    BracketSet g = flatten ? bracket_set(flatten_edits(gold[i])) : bracket_set(gold[i]);
    BracketSet p = flatten ? bracket_set(flatten_edits(pred[i])) : bracket_set(pred[i]);
    out[i] = {matched_brackets(g, p), g.size(), p.size()};
  }
  return out;
}

/// Corpus-level (micro-averaged) parseval.
inline EvalReport parseval(std::span<const Tree> gold, std::span<const Tree> pred) {
  BracketCounts total;
  for (const auto& c : sentence_counts(gold, pred)) total += c;
  return make_report(total, gold.size());
}

/// Parseval after collapsing structure beneath EDITED nodes on both sides.
inline EvalReport flat_f1(std::span<const Tree> gold, std::span<const Tree> pred) {
  BracketCounts total;
  for (const auto& c : sentence_counts(gold, pred, true)) total += c;
  return make_report(total, gold.size());
}

/// Assigns each sentence (by index and gold tree) to one stratum name.
using Stratifier = std::function<std::string(std::size_t, const Tree&)>;

inline Stratifier disfluency_stratifier() {
  return [](std::size_t, const Tree& gold) { return contains_edit(gold) ? "disfluent" : "fluent"; };
}

/// "01-05", "06-10", ..., "36-40", "41+" for width 5 and cap 40.
inline Stratifier length_stratifier(std::size_t width = 5, std::size_t cap = 40) {
  return [width, cap](std::size_t, const Tree& gold) {
    const std::size_t n = gold.num_leaves();
    char buf[32];
    if (n > cap) {
      std::snprintf(buf, sizeof buf, "%02zu+", cap + 1);
    } else {
      const std::size_t lo = (n - 1) / width * width + 1;
      std::snprintf(buf, sizeof buf, "%02zu-%02zu", lo, lo + width - 1);
    }
    return std::string(buf);
  };
}

inline std::map<std::string, EvalReport> stratified_report(std::span<const Tree> gold, std::span<const Tree> pred,
                                                           const Stratifier& stratum, bool flatten = false) {
  auto counts = sentence_counts(gold, pred, flatten);
  std::map<std::string, std::pair<BracketCounts, std::size_t>> acc;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto& [c, n] = acc[stratum(i, gold[i])];
    c += counts[i];
    ++n;
  }
  std::map<std::string, EvalReport> out;
  for (const auto& [name, cn] : acc) out.emplace(name, make_report(cn.first, cn.second));
  return out;
}

/// Paired bootstrap over sentences: the fraction of resampled test sets on
/// which system B's F1 does not exceed system A's. Draw d uses its own
/// generator seeded from (seed, d).
inline double bootstrap_pvalue(std::span<const Tree> gold, std::span<const Tree> pred_a,
                               std::span<const Tree> pred_b, std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw std::invalid_argument("bootstrap needs at least one draw");
  auto a = sentence_counts(gold, pred_a);
  auto b = sentence_counts(gold, pred_b);
  const std::size_t n = a.size();
  if (n == 0) return 1.0;
  std::size_t not_better = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(static_cast<std::uint64_t>(d) >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    BracketCounts sa, sb;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = pick(rng);
      sa += a[i];
      sb += b[i];
    }
    if (f1_score(sb) <= f1_score(sa)) ++not_better;
  }
  return static_cast<double>(not_better) / static_cast<double>(draws);
}

}  // namespace prosparse
