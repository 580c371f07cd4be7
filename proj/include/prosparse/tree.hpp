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

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prosparse/error.hpp"

namespace prosparse {

/// Labeled ordered constituency tree. A leaf carries a token and no
/// children; every other node carries a label and at least one child.
/// Spans are half-open token intervals and are kept current by
/// assign_spans().
struct Tree {
  std::string label;
  std::string token;
  std::vector<Tree> children;
  std::size_t start = 0;
  std::size_t end = 0;

  static Tree leaf(std::string token) {
    Tree t;
    t.token = std::move(token);
    return t;
  }

  static Tree node(std::string label, std::vector<Tree> children) {
    Tree t;
    t.label = std::move(label);
    t.children = std::move(children);
    return t;
  }

  /// (label token) pre-terminal.
  static Tree preterminal(std::string label, std::string token) {
    std::vector<Tree> kids;
    kids.push_back(leaf(std::move(token)));
    return node(std::move(label), std::move(kids));
  }

  bool is_leaf() const { return children.empty(); }

  bool is_preterminal() const {
    return children.size() == 1 && children.front().is_leaf();
  }

  /// Recomputes spans bottom-up starting at token offset `offset`; returns
  /// the end offset.
  std::size_t assign_spans(std::size_t offset = 0) {
    start = offset;
    if (is_leaf()) {
      end = offset + 1;
      return end;
    }
    for (auto& child : children) offset = child.assign_spans(offset);
    end = offset;
    return end;
  }

  std::size_t num_leaves() const {
    if (is_leaf()) return 1;
    std::size_t n = 0;
    for (const auto& child : children) n += child.num_leaves();
    return n;
  }

  std::vector<std::string> leaves() const {
    std::vector<std::string> out;
    collect_leaves(out);
    return out;
  }

  void collect_leaves(std::vector<std::string>& out) const {
    if (is_leaf()) {
      out.push_back(token);
      return;
    }
    for (const auto& child : children) child.collect_leaves(out);
  }

  friend bool operator==(const Tree& a, const Tree& b) {
    return a.label == b.label && a.token == b.token && a.children == b.children;
  }
};

/// Checks the structural invariants; spans must be current.
inline bool is_valid_tree(const Tree& t) {
  if (t.is_leaf()) return !t.token.empty() && t.end == t.start + 1;
  if (!t.token.empty()) return false;
  std::size_t cursor = t.start;
  for (const auto& child : t.children) {
    if (child.start != cursor || !is_valid_tree(child)) return false;
    cursor = child.end;
  }
  return cursor == t.end && t.end > t.start;
}

namespace detail {

class BracketLexer {
 public:
  BracketLexer(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  Tree parse_document() {
    skip_space();
    if (pos_ >= text_.size()) fail("empty tree");
    Tree t = parse_node();
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters after tree");
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + " at line " + std::to_string(line_));
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string read_atom() {
    std::size_t begin = pos_;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '(' || c == ')' || std::isspace(static_cast<unsigned char>(c))) break;
      ++pos_;
    }
    return std::string(text_.substr(begin, pos_ - begin));
  }

  Tree parse_node() {
    if (text_[pos_] != '(') fail("expected '('");
    ++pos_;
    skip_space();
    if (pos_ >= text_.size()) fail("unbalanced brackets");
    std::string label;
    if (text_[pos_] != '(' && text_[pos_] != ')') label = read_atom();
    std::vector<Tree> kids;
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) fail("unbalanced brackets");
      char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        kids.push_back(parse_node());
      } else {
        kids.push_back(Tree::leaf(read_atom()));
      }
    }
    if (kids.empty()) fail("empty constituent '" + label + "'");
    return Tree::node(std::move(label), std::move(kids));
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

inline void write_tree(const Tree& t, std::string& out) {
  if (t.is_leaf()) {
    out += t.token;
    return;
  }
  out += '(';
  out += t.label;
  for (const auto& child : t.children) {
    out += ' ';
    write_tree(child, out);
  }
  out += ')';
}

}  // namespace detail

/// Reads a single bracketed tree, e.g. "(S (NP (PRP i)) (VP (VBP know)))".
/// An unlabeled outer wrapper "( (S ...) )" is removed. Spans are assigned.
inline Tree parse_bracketed(std::string_view text, std::size_t line = 1) {
  Tree t = detail::BracketLexer(text, line).parse_document();
  while (t.label.empty() && t.children.size() == 1 && !t.children.front().is_leaf()) {
    Tree inner = std::move(t.children.front());
    t = std::move(inner);
  }
  if (t.label.empty()) throw ParseError("unlabeled root at line " + std::to_string(line));
  t.assign_spans();
  return t;
}

inline std::string to_bracketed(const Tree& t) {
  std::string out;
  detail::write_tree(t, out);
  return out;
}

}  // namespace prosparse
