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

#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "prosparse/synth.hpp"
#include "prosparse/tree.hpp"
#include "prosparse/treeops.hpp"

namespace prosparse {
namespace {

std::vector<std::string> syms(const std::string& s) { return parse_linear(s).symbols; }

Tree tree(const std::string& s) { return parse_bracketed(s); }

TEST(Linearize, SimpleSentence) {
  EXPECT_EQ(to_string(linearize(tree("(S (NP (PRP i)) (VP (VBP know)))"))), "(S (NP XX ) (VP XX ) )");
}

TEST(Linearize, SingleWord) {
  EXPECT_EQ(to_string(linearize(tree("(INTJ (UH uh))"))), "(INTJ XX )");
}

TEST(Linearize, EditedIsOrdinaryLabel) {
  EXPECT_EQ(to_string(linearize(tree("(S (EDITED (NP (PRP i))) (NP (PRP i)) (VP (VBP know)))"))),
            "(S (EDITED (NP XX ) ) (NP XX ) (VP XX ) )");
}

TEST(Delinearize, AttachesTokens) {
  Tree t = delinearize(parse_linear("(S XX XX )"), {"i", "know"});
  EXPECT_EQ(to_bracketed(t), "(S (XX i) (XX know))");
  EXPECT_TRUE(is_valid_tree(t));
}

TEST(Delinearize, WrongTokenCountIsContractViolation) {
  EXPECT_THROW(delinearize(parse_linear("(S XX )"), {"i", "know"}), ContractViolation);
  EXPECT_THROW(delinearize(parse_linear("(S XX"), {"i"}), ContractViolation);
  EXPECT_THROW(delinearize(parse_linear("(S XX ) (S XX )"), {"a", "b"}), ContractViolation);
}

// POS tags replaced by XX, everything else kept.
Tree normalize_tags(const Tree& t) {
  if (t.is_preterminal()) return Tree::preterminal("XX", t.children[0].token);
  Tree out = Tree::node(t.label, {});
  for (const auto& c : t.children) out.children.push_back(normalize_tags(c));
  return out;
}

TEST(Delinearize, RoundTripReplacesTags) {
  SynthConfig cfg;
  cfg.disfluency_rate = 0.3;
  cfg.count = 100;
  for (const auto& ex : gen_synthetic(cfg, 17)) {
    LinearParse lin = linearize(ex.gold);
    Tree back = delinearize(lin, ex.utterance.tokens);
    EXPECT_EQ(back, normalize_tags(ex.gold));
    EXPECT_EQ(linearize(back), lin);
  }
}

TEST(Repair, ClosesOpenBrackets) {
  EXPECT_EQ(to_string(repair(syms("(S (NP XX"), 1)), "(S (NP XX ) )");
}

TEST(Repair, RemovesSurplusXX) {
  EXPECT_EQ(to_string(repair(syms("(S XX XX XX )"), 2)), "(S XX XX )");
}

TEST(Repair, EmptyInputFallsBackToFlatS) {
  EXPECT_EQ(to_string(repair({}, 3)), "(S XX XX XX )");
}

TEST(Repair, AddsMissingXXBeforeFinalClose) {
  EXPECT_EQ(to_string(repair(syms("(S (NP XX ) (VP XX ) )"), 4)), "(S (NP XX ) (VP XX ) XX XX )");
}

TEST(Repair, DropsLeadingUnmatchedClose) {
  EXPECT_EQ(to_string(repair(syms(") ) (S XX )"), 1)), "(S XX )");
}

TEST(Repair, SurplusRemovedFromTheEnd) {
  EXPECT_EQ(to_string(repair(syms("(S (NP XX XX ) (VP XX ) )"), 2)), "(S (NP XX XX ) )");
}

TEST(Repair, WrapsMultipleRoots) {
  EXPECT_EQ(to_string(repair(syms("(NP XX ) (VP XX )"), 2)), "(S (NP XX ) (VP XX ) )");
}

TEST(Repair, DropsForeignSymbols) {
  EXPECT_EQ(to_string(repair(syms("<s> (S XX </s> XX )"), 2)), "(S XX XX )");
}

TEST(Repair, ZeroTokensIsContractViolation) {
  EXPECT_THROW(repair({}, 0), ContractViolation);
}

TEST(Repair, NoOpOnValidParses) {
  SynthConfig cfg;
  cfg.disfluency_rate = 0.3;
  for (const auto& ex : gen_synthetic(cfg, 23)) {
    LinearParse lin = linearize(ex.gold);
    EXPECT_EQ(repair(lin.symbols, ex.utterance.tokens.size()), lin);
  }
}

std::vector<std::string> random_symbols(std::mt19937_64& rng) {
  static const std::vector<std::string> pool = {"(S", "(NP", "(VP", "(PP", "(EDITED", ")", ")", "XX", "XX", "XX", "<s>", "</s>", "junk"};
  std::uniform_int_distribution<std::size_t> len(0, 30), pick(0, pool.size() - 1);
  std::vector<std::string> out(len(rng));
  for (auto& s : out) s = pool[pick(rng)];
  return out;
}

TEST(Repair, FuzzedOutputAlwaysValid) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> ntok(1, 15);
  for (int trial = 0; trial < 10000; ++trial) {
    auto raw = random_symbols(rng);
    const std::size_t n = ntok(rng);
    LinearParse fixed = repair(raw, n);
    ASSERT_TRUE(is_valid_linear(fixed.symbols, n)) << to_string(LinearParse{raw}) << " n=" << n;
    std::vector<std::string> tokens(n, "w");
    Tree t = delinearize(fixed, tokens);
    ASSERT_TRUE(is_valid_tree(t));
    ASSERT_EQ(t.num_leaves(), n);
  }
}

TEST(FlattenEdits, CollapsesStructure) {
  EXPECT_EQ(to_bracketed(flatten_edits(tree("(EDITED (NP (PRP i) (VBP am)))"))), "(EDITED (XX i) (XX am))");
}

TEST(FlattenEdits, NestedEditsCollapseIntoOutermost) {
  EXPECT_EQ(to_bracketed(flatten_edits(tree("(EDITED (EDITED (XX a)) (XX b))"))), "(EDITED (XX a) (XX b))");
}

TEST(FlattenEdits, IdentityWithoutEdits) {
  Tree t = tree("(S (NP (DT the) (NN dog)) (VP (VBD ran)))");
  EXPECT_EQ(flatten_edits(t), t);
}

TEST(FlattenEdits, PreservesLeavesAndSpans) {
  SynthConfig cfg;
  cfg.disfluency_rate = 0.5;
  cfg.count = 100;
  for (const auto& ex : gen_synthetic(cfg, 6)) {
    Tree f = flatten_edits(ex.gold);
    EXPECT_EQ(f.leaves(), ex.gold.leaves());
    EXPECT_TRUE(is_valid_tree(f));
  }
}

TEST(ContainsEdit, Basic) {
  EXPECT_FALSE(contains_edit(tree("(S (XX hi))")));
  EXPECT_TRUE(contains_edit(tree("(S (EDITED (XX i)) (XX i))")));
}

}  // namespace
}  // namespace prosparse
