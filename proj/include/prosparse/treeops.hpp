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

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "prosparse/error.hpp"
#include "prosparse/text.hpp"
#include "prosparse/tree.hpp"

namespace prosparse {

inline constexpr std::string_view kPreterminalSymbol = "XX";
inline constexpr std::string_view kCloseSymbol = ")";
inline constexpr std::string_view kEditedLabel = "EDITED";
inline constexpr std::string_view kFallbackRoot = "S";

/// Bracket-string rendering of a parse: "(L" opens, ")" closes, and "XX"
/// stands for each pre-terminal/word pair.
struct LinearParse {
  std::vector<std::string> symbols;

  friend bool operator==(const LinearParse&, const LinearParse&) = default;
};

inline bool is_open_symbol(std::string_view s) { return s.size() > 1 && s.front() == '('; }
inline bool is_close_symbol(std::string_view s) { return s == kCloseSymbol; }
inline bool is_preterminal_symbol(std::string_view s) { return s == kPreterminalSymbol; }

inline std::string open_symbol(std::string_view label) { return "(" + std::string(label); }

/// Space-separated form, e.g. "(S (NP XX ) (VP XX ) )".
inline std::string to_string(const LinearParse& p) {
  std::string out;
  for (std::size_t i = 0; i < p.symbols.size(); ++i) {
    if (i) out += ' ';
    out += p.symbols[i];
  }
  return out;
}

inline LinearParse parse_linear(std::string_view line) {
  LinearParse p;
  for (auto s : text::split_ws(text::trim(line))) p.symbols.emplace_back(s);
  return p;
}

namespace detail {

inline void linearize_into(const Tree& t, std::vector<std::string>& out) {
  if (t.is_leaf() || t.is_preterminal()) {
    out.emplace_back(kPreterminalSymbol);
    return;
  }
  out.push_back(open_symbol(t.label));
  for (const auto& child : t.children) linearize_into(child, out);
  out.emplace_back(kCloseSymbol);
}

}  // namespace detail

/// Depth-first, left-to-right. Terminals are dropped and every pre-terminal
/// becomes "XX". A tree whose root is itself a pre-terminal linearizes to a
/// bare "XX".
inline LinearParse linearize(const Tree& tree) {
  LinearParse p;
  detail::linearize_into(tree, p.symbols);
  return p;
}

/// True when `symbols` encode exactly one non-empty constituent with
/// balanced brackets and `num_tokens` pre-terminals.
inline bool is_valid_linear(const std::vector<std::string>& symbols, std::size_t num_tokens) {
  if (symbols.empty() || !is_open_symbol(symbols.front())) return false;
  std::size_t depth = 0, xx = 0;
  std::vector<std::size_t> kids;  // child count per open constituent
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const auto& s = symbols[i];
    if (is_open_symbol(s)) {
      if (depth == 0 && i != 0) return false;
      if (!kids.empty()) ++kids.back();
      kids.push_back(0);
      ++depth;
    } else if (is_close_symbol(s)) {
      if (depth == 0 || kids.back() == 0) return false;
      kids.pop_back();
      --depth;
      if (depth == 0 && i + 1 != symbols.size()) return false;
    } else if (is_preterminal_symbol(s)) {
      if (depth == 0) return false;
      ++kids.back();
      ++xx;
    } else {
      return false;
    }
  }
  return depth == 0 && xx == num_tokens;
}

/// Rebuilds a tree from a valid parse, attaching tokens[i] under the i-th
/// "XX". Throws ContractViolation on an invalid parse; run repair() first.
inline Tree delinearize(const LinearParse& parse, const std::vector<std::string>& tokens) {
  if (!is_valid_linear(parse.symbols, tokens.size()))
    throw ContractViolation("delinearize: invalid parse for " + std::to_string(tokens.size()) + " tokens: " +
                            to_string(parse));
  std::vector<Tree> stack;
  std::size_t next_token = 0;
  Tree root;
  for (const auto& s : parse.symbols) {
    if (is_open_symbol(s)) {
      stack.push_back(Tree::node(s.substr(1), {}));
    } else if (is_close_symbol(s)) {
      Tree done = std::move(stack.back());
      stack.pop_back();
      if (stack.empty())
        root = std::move(done);
      else
        stack.back().children.push_back(std::move(done));
    } else {
      stack.back().children.push_back(Tree::preterminal(std::string(kPreterminalSymbol), tokens[next_token++]));
    }
  }
  root.assign_spans();
  return root;
}

namespace detail {

/// Drops "(L" immediately closed by ")" until none remain.
inline std::vector<std::string> remove_empty_constituents(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  out.reserve(in.size());
  for (const auto& s : in) {
    if (is_close_symbol(s) && !out.empty() && is_open_symbol(out.back())) {
      out.pop_back();
      continue;
    }
    out.push_back(s);
  }
  return out;
}

inline bool has_single_root(const std::vector<std::string>& s) {
  if (s.empty() || !is_open_symbol(s.front())) return false;
  std::size_t depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (is_open_symbol(s[i])) ++depth;
    else if (is_close_symbol(s[i])) --depth;
    if (depth == 0) return i + 1 == s.size();
  }
  return false;
}

}  // namespace detail

/// Turns arbitrary decoder output into a valid parse with exactly
/// `num_tokens` pre-terminals. Steps, in order:
///   1. drop symbols outside the parse vocabulary;
///   2. drop unmatched ")" and close unmatched "(L" at the end;
///   3. drop empty constituents;
///   4. wrap in "(S ... )" unless there is exactly one root constituent;
///   5. add "XX" before the final ")" or delete "XX" from the end inward;
///   6. drop constituents emptied by step 5.
/// Empty input therefore becomes the flat (S XX ... XX) fallback.
inline LinearParse repair(const std::vector<std::string>& raw, std::size_t num_tokens) {
  if (num_tokens == 0) throw ContractViolation("repair: sentence has no tokens");
  std::vector<std::string> s;
  s.reserve(raw.size() + num_tokens + 4);
  std::size_t depth = 0;
  for (const auto& sym : raw) {
    if (is_open_symbol(sym)) {
      ++depth;
      s.push_back(sym);
    } else if (is_close_symbol(sym)) {
      if (depth == 0) continue;
      --depth;
      s.push_back(sym);
    } else if (is_preterminal_symbol(sym)) {
      s.push_back(sym);
    }
  }
  for (; depth > 0; --depth) s.emplace_back(kCloseSymbol);

  s = detail::remove_empty_constituents(s);

  if (!detail::has_single_root(s)) {
    s.insert(s.begin(), open_symbol(kFallbackRoot));
    s.emplace_back(kCloseSymbol);
  }

  std::size_t xx = 0;
  for (const auto& sym : s) xx += is_preterminal_symbol(sym);
  if (xx < num_tokens) {
    s.insert(s.end() - 1, num_tokens - xx, std::string(kPreterminalSymbol));
  } else if (xx > num_tokens) {
    std::size_t excess = xx - num_tokens;
    for (std::size_t i = s.size(); i-- > 0 && excess > 0;) {
      if (is_preterminal_symbol(s[i])) {
        s.erase(s.begin() + static_cast<std::ptrdiff_t>(i));
        --excess;
      }
    }
    s = detail::remove_empty_constituents(s);
  }
  return LinearParse{std::move(s)};
}

inline bool contains_edit(const Tree& t) {
  if (t.label == kEditedLabel && !t.is_leaf()) return true;
  for (const auto& child : t.children)
    if (contains_edit(child)) return true;
  return false;
}

/// Collapses everything under each outermost EDITED node so that its words
/// hang directly beneath it as (XX word) pre-terminals.
inline Tree flatten_edits(const Tree& t) {
  if (t.is_leaf() || t.is_preterminal()) return t;
  Tree out = Tree::node(t.label, {});
  out.start = t.start;
  out.end = t.end;
  if (t.label == kEditedLabel) {
    for (auto& word : t.leaves()) out.children.push_back(Tree::preterminal(std::string(kPreterminalSymbol), word));
    out.assign_spans(t.start);
    return out;
  }
  for (const auto& child : t.children) out.children.push_back(flatten_edits(child));
  return out;
}

}  // namespace prosparse
