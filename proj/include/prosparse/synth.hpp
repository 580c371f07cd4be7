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
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "prosparse/corpus.hpp"
#include "prosparse/error.hpp"
#include "prosparse/prosody.hpp"
#include "prosparse/text.hpp"
#include "prosparse/tree.hpp"

namespace prosparse {

struct GrammarRule {
  std::string lhs;
  std::vector<std::string> rhs;
  double weight = 1.0;
  // The last two children may attach high (siblings under lhs) or low
  // (wrapped under a node labeled like the second-to-last child).
  bool ambiguous = false;
};

struct LexicalEntry {
  std::string tag;
  std::string word;
  double mean_duration = 0.25;  // seconds
};

/// A small PCFG with a timed lexicon.
///
///     rule VP -> VBD NP PP 0.9 ambiguous
///     word NN dog 0.32
struct Grammar {
  std::string start = "S";
  std::vector<GrammarRule> rules;
  std::vector<LexicalEntry> words;

  void validate() const {
    if (words.empty()) throw ConfigError("grammar has no terminals");
    std::set<std::string> tags;
    for (const auto& w : words) {
      if (!(w.mean_duration > 0)) throw ConfigError("word '" + w.word + "' needs a positive mean duration");
      tags.insert(w.tag);
    }
    std::set<std::string> lhs;
    for (const auto& r : rules) {
      if (r.rhs.empty()) throw ConfigError("rule for " + r.lhs + " has an empty right-hand side");
      if (!(r.weight > 0)) throw ConfigError("rule for " + r.lhs + " needs a positive weight");
      if (r.ambiguous && r.rhs.size() < 3) throw ConfigError("ambiguous rule for " + r.lhs + " needs 3+ children");
      lhs.insert(r.lhs);
    }
    auto known = [&](const std::string& s) { return tags.count(s) > 0 || lhs.count(s) > 0; };
    if (!known(start)) throw ConfigError("start symbol " + start + " has no rules");
    for (const auto& r : rules)
      for (const auto& s : r.rhs)
        if (!known(s)) throw ConfigError("symbol " + s + " has no rules or words");
  }
};

inline Grammar read_grammar(std::istream& in) {
  Grammar g;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto f = text::split_ws(view);
    const std::string where = "grammar line " + std::to_string(lineno);
    if (f[0] == "start" && f.size() == 2) {
      g.start = std::string(f[1]);
    } else if (f[0] == "word" && f.size() == 4) {
      g.words.push_back({std::string(f[1]), std::string(f[2]), text::to_double(f[3], where)});
    } else if (f[0] == "rule" && f.size() >= 5 && f[2] == "->") {
      GrammarRule r;
      r.lhs = std::string(f[1]);
      std::size_t last = f.size() - 1;
      if (f[last] == "ambiguous") {
        r.ambiguous = true;
        --last;
      }
      r.weight = text::to_double(f[last], where);
      for (std::size_t i = 3; i < last; ++i) r.rhs.emplace_back(f[i]);
      g.rules.push_back(std::move(r));
    } else {
      throw ConfigError("cannot read " + where + ": " + std::string(view));
    }
  }
  g.validate();
  return g;
}

inline void write_grammar(std::ostream& out, const Grammar& g) {
  out << "start " << g.start << '\n';
  for (const auto& r : g.rules) {
    out << "rule " << r.lhs << " ->";
    for (const auto& s : r.rhs) out << ' ' << s;
    out << ' ' << text::fmt(r.weight, 3) << (r.ambiguous ? " ambiguous" : "") << '\n';
  }
  for (const auto& w : g.words) out << "word " << w.tag << ' ' << w.word << ' ' << text::fmt(w.mean_duration, 3) << '\n';
}

/// PP attachment under a transitive verb is the only ambiguity; nothing in
/// the words predicts it.
inline Grammar default_grammar() {
  static const char* kText = R"(start S
rule S -> NP VP 0.95
rule S -> INTJ 0.05
rule NP -> PRP 0.3
rule NP -> DT NN 0.5
rule NP -> DT JJ NN 0.2
rule VP -> VBD NP PP 0.9 ambiguous
rule VP -> VBD NP 0.1
rule PP -> IN NP 1
word PRP i 0.12
word PRP you 0.15
word PRP she 0.2
word PRP they 0.18
word DT the 0.1
word DT a 0.08
word DT that 0.16
word NN man 0.3
word NN dog 0.28
word NN girl 0.3
word NN park 0.34
word NN telescope 0.52
word NN hat 0.26
word NN book 0.27
word JJ old 0.3
word JJ big 0.25
word JJ red 0.22
word VBD saw 0.3
word VBD hit 0.22
word VBD found 0.35
word VBD watched 0.36
word IN with 0.16
word IN near 0.24
word IN in 0.1
word INTJ yeah 0.3
word INTJ uh-huh 0.4
word INTJ okay 0.38
)";
  std::istringstream in(kText);
  return read_grammar(in);
}

struct SynthConfig {
  Grammar grammar = default_grammar();
  std::size_t count = 200;
  std::string id_prefix = "syn";
  bool coupling = true;
  double disfluency_rate = 0.0;  // chance of repeating the subject as EDITED
  double duration_jitter = 0.0;  // relative; 0 makes every word last its mean
  std::size_t max_depth = 32;

  void validate() const {
    grammar.validate();
    if (!(disfluency_rate >= 0 && disfluency_rate <= 1)) throw ConfigError("disfluency_rate must be in [0, 1]");
    if (!(duration_jitter >= 0 && duration_jitter < 1)) throw ConfigError("duration_jitter must be in [0, 1)");
    if (id_prefix.empty()) throw ConfigError("id_prefix must be nonempty");
  }
};

// Pause durations in milliseconds. Ordinary gaps stay at or below 200 ms;
// the coupled boundary pause is always longer.
inline constexpr int kLongPauseMinMs = 250;
inline constexpr int kLongPauseMaxMs = 950;

namespace detail {

class SynthGenerator {
 public:
  SynthGenerator(const SynthConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    for (std::size_t i = 0; i < cfg_.grammar.words.size(); ++i) by_tag_[cfg_.grammar.words[i].tag].push_back(i);
    for (std::size_t i = 0; i < cfg_.grammar.rules.size(); ++i) by_lhs_[cfg_.grammar.rules[i].lhs].push_back(i);
  }

  Example next(std::size_t index) {
    site_.reset();
    tokens_.clear();
    means_.clear();
    Tree tree = expand(cfg_.grammar.start, 0);
    if (cfg_.disfluency_rate > 0 && uniform() < cfg_.disfluency_rate && tree.children.size() > 1 &&
        !tree.children.front().is_leaf()) {
      Tree copy = tree.children.front();
      const std::size_t shift = copy.num_leaves();
      std::vector<std::string> w(tokens_.begin(), tokens_.begin() + static_cast<std::ptrdiff_t>(shift));
      std::vector<double> m(means_.begin(), means_.begin() + static_cast<std::ptrdiff_t>(shift));
      tokens_.insert(tokens_.begin(), w.begin(), w.end());
      means_.insert(means_.begin(), m.begin(), m.end());
      std::vector<Tree> edited;
      edited.push_back(std::move(copy));
      tree.children.insert(tree.children.begin(), Tree::node("EDITED", std::move(edited)));
      if (site_) {
        site_->object_start += shift;
        site_->pp_start += shift;
        site_->pp_end += shift;
      }
    }
    tree.assign_spans();

    Example ex;
    ex.gold = std::move(tree);
    ex.attachment = site_;
    ex.has_acoustics = true;
    char id[32];
    std::snprintf(id, sizeof id, "%05zu", index);
    ex.utterance.id = cfg_.id_prefix + id;
    ex.utterance.speaker_side = ex.utterance.id + ":A";
    ex.utterance.tokens = tokens_;
    time_words(ex);
    return ex;
  }

 private:
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Tree expand(const std::string& symbol, std::size_t depth) {
    if (depth > cfg_.max_depth) throw ConfigError("grammar recursion deeper than " + std::to_string(cfg_.max_depth));
    auto rules = by_lhs_.find(symbol);
    auto tags = by_tag_.find(symbol);
    const bool can_rule = rules != by_lhs_.end();
    const bool can_word = tags != by_tag_.end();
    if (can_word && (!can_rule || uniform() < 0.5)) {
      const auto& options = tags->second;
      const auto& w = cfg_.grammar.words[options[static_cast<std::size_t>(
          uniform_int(0, static_cast<int>(options.size()) - 1))]];
      tokens_.push_back(w.word);
      means_.push_back(w.mean_duration);
      return Tree::preterminal(w.tag, w.word);
    }
    const auto& ids = rules->second;
    std::vector<double> weights;
    for (std::size_t id : ids) weights.push_back(cfg_.grammar.rules[id].weight);
    const auto& rule = cfg_.grammar.rules[ids[std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng_)]];

    std::vector<Tree> kids;
    std::vector<std::size_t> starts;
    for (const auto& s : rule.rhs) {
      starts.push_back(tokens_.size());
      kids.push_back(expand(s, depth + 1));
    }
    if (rule.ambiguous) {
      const bool high = uniform() < 0.5;
      const std::size_t n = rule.rhs.size();
      if (!site_) site_ = AttachmentSite{starts[n - 2], starts[n - 1], tokens_.size(), high};
      if (!high) {
        std::vector<Tree> inner;
        inner.push_back(std::move(kids[n - 2]));
        inner.push_back(std::move(kids[n - 1]));
        kids.resize(n - 2);
        kids.push_back(Tree::node(rule.rhs[n - 2], std::move(inner)));
      }
    }
    return Tree::node(rule.lhs, std::move(kids));
  }

  int short_gap_ms() {
    const double u = uniform();
    if (u < 0.5) return 0;
    if (u < 0.8) return uniform_int(5, 45);
    return uniform_int(70, 180);
  }

  void time_words(Example& ex) {
    const std::size_t n = tokens_.size();
    std::vector<int> gaps(n > 0 ? n - 1 : 0);
    for (auto& g : gaps) g = short_gap_ms();
    if (site_ && site_->object_start > 0) {
      bool at_pp = site_->high;
      if (!cfg_.coupling) at_pp = uniform() < 0.5;
      const std::size_t before = at_pp ? site_->pp_start - 1 : site_->object_start - 1;
      gaps[before] = uniform_int(kLongPauseMinMs, kLongPauseMaxMs);
    }
    std::vector<TimeSpan> spans;
    int now = uniform_int(0, 50);
    for (std::size_t i = 0; i < n; ++i) {
      double dur = means_[i];
      if (cfg_.duration_jitter > 0) dur *= 1.0 + cfg_.duration_jitter * (2.0 * uniform() - 1.0);
      const int ms = std::max(10, static_cast<int>(std::lround(dur * 1000.0)));
      spans.push_back({now / 1000.0, (now + ms) / 1000.0});
      now += ms;
      if (i + 1 < n) now += gaps[i];
    }
    ex.utterance.frames = render_frames(spans);
    ex.utterance.alignments = std::move(spans);
  }

  // Voiced frames carry pitch and energy; silences are low-energy noise.
  Matrix render_frames(const std::vector<TimeSpan>& spans) {
    const std::size_t rows = expected_frames(spans.back().end);
    Matrix m(rows, kFrameFeatures);
    std::size_t w = 0;
    double prev_pitch = 0.0;
    auto q = [](double v) { return std::round(v * 1e6) / 1e6; };
    for (std::size_t r = 0; r < rows; ++r) {
      const double t = (static_cast<double>(r) + 0.5) * kFrameHop;
      while (w < spans.size() && spans[w].end < t) ++w;
      const bool voiced = w < spans.size() && spans[w].start <= t;
      const double noise = uniform() - 0.5;
      double pitch = 0.0;
      if (voiced) {
        const double rel = (t - spans[w].start) / std::max(spans[w].end - spans[w].start, kFrameHop);
        pitch = 0.2 * std::sin(3.0 * rel) - 0.05 * static_cast<double>(w) / static_cast<double>(spans.size());
        m(r, 0) = q(0.8 + 0.1 * noise);
        m(r, 3) = q(-1.0 + 0.3 * noise);
        m(r, 4) = q(std::log(0.7) + 0.05 * noise);
        m(r, 5) = q(std::log(0.3) + 0.05 * noise);
      } else {
        m(r, 0) = q(0.1 + 0.1 * noise);
        m(r, 3) = q(-6.0 + 0.3 * noise);
        m(r, 4) = q(std::log(0.5) + 0.05 * noise);
        m(r, 5) = q(std::log(0.5) + 0.05 * noise);
      }
      m(r, 1) = q(pitch);
      m(r, 2) = q(pitch - prev_pitch);
      prev_pitch = pitch;
    }
    return m;
  }

  const SynthConfig& cfg_;
  std::mt19937_64 rng_;
  std::map<std::string, std::vector<std::size_t>> by_tag_;
  std::map<std::string, std::vector<std::size_t>> by_lhs_;
  std::vector<std::string> tokens_;
  std::vector<double> means_;
  std::optional<AttachmentSite> site_;
};

}  // namespace detail

/// Deterministic for a fixed (config, seed). Every example is aligned, has
/// frames, and carries its attachment site when one was generated.
inline std::vector<Example> gen_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  detail::SynthGenerator gen(cfg, seed);
  std::vector<Example> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) out.push_back(gen.next(i));
  return out;
}

/// Lexicon whose means are the grammar's word means; counts are corpus
/// occurrences.
inline DurationLexicon synthetic_lexicon(const Grammar& g, std::span<const Example> corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : corpus)
    for (const auto& t : ex.utterance.tokens) ++counts[t];
  DurationLexicon lex;
  for (const auto& w : g.words) {
    auto [it, fresh] = lex.word_means.try_emplace(w.word, WordStat{w.mean_duration, counts[w.word]});
    if (!fresh && it->second.mean != w.mean_duration)
      throw ConfigError("word '" + w.word + "' has conflicting mean durations");
  }
  lex.validate();
  return lex;
}

/// True when `tree` groups the object and the PP into one constituent.
inline bool predicts_low_attachment(const Tree& tree, const AttachmentSite& site) {
  if (tree.is_leaf() || tree.is_preterminal()) return false;
  if (tree.start == site.object_start && tree.end == site.pp_end) return true;
  for (const auto& c : tree.children)
    if (predicts_low_attachment(c, site)) return true;
  return false;
}

struct AttachmentScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Attachment accuracy over the examples that carry a site. `pred` must be
/// aligned with `examples` and have spans assigned.
inline AttachmentScore attachment_accuracy(std::span<const Example> examples, std::span<const Tree> pred) {
  if (examples.size() != pred.size()) throw PairingError("attachment scoring needs one tree per example");
  AttachmentScore s;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!examples[i].attachment) continue;
    const auto& site = *examples[i].attachment;
    s.correct += predicts_low_attachment(pred[i], site) == !site.high;
    ++s.total;
  }
  return s;
}

}  // namespace prosparse
