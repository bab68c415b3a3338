#include <gtest/gtest.h>

#include <qcd/fixtures.hpp>
#include <qcd/prompt.hpp>
#include <qcd/table_lm.hpp>
#include <qcd/tasks.hpp>

#include "support/fixtures.hpp"

#include <cmath>
#include <random>

using namespace qcd;
using qcd::testing::data_path;
using qcd::testing::test_data_path;

namespace {

TableLM from_text(const std::string& s) { return TableLM(parse_table_lm(s)); }

std::string parse_error(const std::string& s) {
  try {
    parse_table_lm(s, "spec");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

std::string apple_context(bool with_query, bool hint = false) {
  auto task = load_tasks(test_data_path("apple-task.jsonl")).tasks.at(0);
  auto seq = build_sequence(instruction(InstructionKind::td_ins), task.context_pairs, task.query, hint);
  return render(with_query ? seq : drop_query(seq));
}

const char* kVocab4 = "[VOCAB]\ntokens = a b c <eos>\neos = <eos>\nclass.all = a b c <eos>\n";

}  // namespace

TEST(TableLM, UniformRule) {
  auto lm = from_text(std::string(kVocab4) + "[RULES]\nrule = * -> @all:1.0\n");
  for (std::vector<TokenId> prefix : {std::vector<TokenId>{}, {0}, {1, 2}}) {
    auto l = lm.next_logits("anything at all", prefix);
    for (double v : l.values) EXPECT_DOUBLE_EQ(v, std::log(0.25));
  }
}

TEST(TableLM, NoMatchingRuleFallsBackToUniform) {
  auto lm = from_text(std::string(kVocab4) + "[RULES]\nrule = ctx:zebra -> a:1.0\n");
  auto l = lm.next_logits("no match here", {});
  for (double v : l.values) EXPECT_DOUBLE_EQ(v, std::log(0.25));
}

TEST(TableLM, PriorBiasOneIsPointMass) {
  auto lm = from_text(
      "[VOCAB]\ntokens = red purple apple <eos>\neos = <eos>\n"
      "[PRIOR]\nrule = * -> red:1.0\n"
      "[RULES]\nrule = * -> purple:0.5 apple:0.25 <eos>:0.25\n"
      "[PARAMS]\nprior_bias = 1.0\n");
  for (std::vector<TokenId> prefix : {std::vector<TokenId>{}, {1}, {1, 2}}) {
    auto d = lm.distribution(ContextFeatures::extract("x QUERY: purple", "most important clue"), prefix);
    EXPECT_EQ(d[0], 1.0);
    EXPECT_EQ(d[1], 0.0);
  }
}

TEST(TableLM, MixtureIdentityAtZeroKnobs) {
  const std::string vocab =
      "[VOCAB]\ntokens = red purple apple hat <eos>\neos = <eos>\n"
      "class.attribute = red purple\nclass.object = apple hat\n";
  const std::string rules =
      "[RULES]\n"
      "rule = que:@attribute prev:^ -> $query:0.6 $ctx@attribute:0.4\n"
      "rule = prev:^ -> @attribute:1.0\n"
      "rule = prev:@attribute -> $ctx@object:1.0\n"
      "rule = * -> <eos>:1.0\n";
  auto knobs = TableLM(parse_table_lm(vocab + "[PRIOR]\nrule = ctx:apple -> red:1.0\nrule = * -> hat:1.0\n" + rules +
                                      "[PARAMS]\nprior_bias = 0.9\ncompliance_gain = 3\n"))
                   .with_params(0.0, 0.0);
  auto bare = TableLM(parse_table_lm(vocab + rules));
  for (const char* ctx : {"red apple QUERY: purple", "most important clue purple hat QUERY: red", "red apple"})
    for (std::vector<TokenId> prefix : {std::vector<TokenId>{}, {0}, {0, 2}})
      EXPECT_EQ(knobs.next_logits(ctx, prefix).values, bare.next_logits(ctx, prefix).values) << ctx;
}

TEST(TableLM, AppleTaskMixtureArithmetic) {
  auto lm = TableLM::load(data_path("cobsat-mini.tablelm"));
  EXPECT_EQ(lm.spec().prior_bias, 0.7);
  const std::vector<std::string> attrs = {"purple", "red", "green", "wooden", "glass"};
  auto full = softmax(lm.next_logits(apple_context(true), {}));
  auto sub = softmax(lm.next_logits(apple_context(false), {}));
  for (size_t i = 0; i < attrs.size(); ++i) {
    const auto id = static_cast<size_t>(lm.vocab().id(attrs[i]));
    EXPECT_NEAR(full[id], qcd::testing::kAppleMixFull[i], 1e-12) << attrs[i];
    EXPECT_NEAR(sub[id], qcd::testing::kAppleMixSub[i], 1e-12) << attrs[i];
  }
  // Query-present: 0.3 * rule + 0.7 * prior. Query-dropped: the prior alone.
  const auto purple = static_cast<size_t>(lm.vocab().id("purple"));
  EXPECT_NEAR(full[purple], 0.3 * 0.5 + 0.7 * 0.125, 1e-12);
  EXPECT_NEAR(sub[purple], 0.125, 1e-12);
  for (const auto& obj : {"apple", "hat", "cup", "book", "leaf", "<eos>"})
    EXPECT_EQ(full[static_cast<size_t>(lm.vocab().id(obj))], 0.0);
}

TEST(TableLM, HintGainBoostsQueryTokens) {
  auto lm = TableLM::load(data_path("cobsat-mini.tablelm"));
  const auto purple = static_cast<size_t>(lm.vocab().id("purple"));
  auto off = softmax(lm.next_logits(apple_context(true, false), {}));
  auto on = softmax(lm.next_logits(apple_context(true, true), {}));
  // purple 0.2375 doubled, renormalized over 1.2375
  EXPECT_NEAR(on[purple], 0.475 / 1.2375, 1e-12);
  EXPECT_GT(on[purple], off[purple]);
  auto flat = lm.with_params(0.7, 0.0);
  EXPECT_EQ(flat.next_logits(apple_context(true, true), {}).values,
            flat.next_logits(apple_context(true, false), {}).values);
  // the hint alone, without a query, changes nothing
  EXPECT_EQ(lm.next_logits(apple_context(false, true), {}).values,
            lm.next_logits(apple_context(false, false), {}).values);
}

TEST(TableLM, DeterministicAndNormalized) {
  auto lm = TableLM::load(data_path("cobsat-mini.tablelm"));
  auto tasks = load_tasks(data_path("cobsat-mini.jsonl")).tasks;
  std::mt19937_64 rng(11);
  for (const auto& t : tasks)
    for (bool hint : {false, true}) {
      auto seq = build_sequence(instruction(InstructionKind::td_ins), t.context_pairs, t.query, hint);
      for (const auto& ctx : {render(seq), render(drop_query(seq))}) {
        std::vector<TokenId> prefix;
        for (int k = 0; k < 3; ++k) {
          auto a = lm.next_logits(ctx, prefix), b = lm.next_logits(ctx, prefix);
          EXPECT_EQ(a.values, b.values);
          double s = 0.0;
          for (double v : a.values) s += std::exp(v);
          EXPECT_NEAR(s, 1.0, 1e-9);
          prefix.push_back(static_cast<TokenId>(rng() % lm.vocab().size()));
        }
      }
    }
}

TEST(TableLM, UnknownPrefixToken) {
  auto lm = from_text(std::string(kVocab4) + "[RULES]\nrule = * -> @all:1.0\n");
  std::vector<TokenId> bad = {7};
  EXPECT_THROW(lm.next_logits("x", bad), ConfigError);
}

TEST(TableLM, ConditionsAndTargets) {
  auto lm = from_text(
      "[VOCAB]\ntokens = red purple apple hat <eos>\neos = <eos>\n"
      "class.attribute = red purple\nclass.object = apple hat\n"
      "[RULES]\n"
      "rule = hint prev:^ -> red:1.0\n"
      "rule = !query prev:^ -> $ctx@object:1.0\n"
      "rule = que:@attribute prev:^ -> $query:1.0\n"
      "rule = prev2:red prev:apple -> hat:1.0\n"
      "rule = prev:@object -> <eos>:1.0\n"
      "rule = * -> @object:1.0\n"
      "[PARAMS]\nhint_phrase = Magic Words\n");
  auto f = [](const char* s) { return ContextFeatures::extract(s, "Magic Words"); };
  auto d1 = lm.distribution(f("some magic words here QUERY: purple"), {});
  EXPECT_EQ(d1[0], 1.0);  // hint matched case-insensitively
  auto d2 = lm.distribution(f("hat and apple"), {});
  EXPECT_EQ(d2[2], 0.5);
  EXPECT_EQ(d2[3], 0.5);
  auto d3 = lm.distribution(f("x QUERY: purple"), {});
  EXPECT_EQ(d3[1], 1.0);
  std::vector<TokenId> ra = {0, 2};
  EXPECT_EQ(lm.distribution(f("x QUERY: purple"), ra)[3], 1.0);
  std::vector<TokenId> pa = {1, 2};
  EXPECT_EQ(lm.distribution(f("x QUERY: purple"), pa)[4], 1.0);
  std::vector<TokenId> p = {1};
  auto d4 = lm.distribution(f("x QUERY: purple"), p);
  EXPECT_EQ(d4[2], 0.5);
  EXPECT_EQ(d4[3], 0.5);
}

TEST(TableLM, ParseErrorsCarryLineNumbers) {
  const std::string v = kVocab4;  // 4 lines
  EXPECT_NE(parse_error(v + "[RULES]\nrule = * -> a:0.5 b:0.4\n").find("spec:6: invalid distribution"),
            std::string::npos);
  EXPECT_NE(parse_error(v + "[PARAMS]\nbogus = 1\n").find("spec:6: unknown key 'bogus'"), std::string::npos);
  EXPECT_NE(parse_error(v + "[WHAT]\n").find("spec:5: unknown section"), std::string::npos);
  EXPECT_NE(parse_error(v + "[RULES]\nrule = * -> z:1.0\n").find("spec:6: unknown token 'z'"), std::string::npos);
  EXPECT_NE(parse_error(v + "[RULES]\nrule = ctx:@nope -> a:1.0\n").find("unknown class"), std::string::npos);
  EXPECT_NE(parse_error(v + "[RULES]\nrule = * a:1.0\n").find("spec:6:"), std::string::npos);
  EXPECT_NE(parse_error(v + "[PARAMS]\nprior_bias = 1.5\n").find("prior_bias must be in [0, 1]"), std::string::npos);
  EXPECT_NE(parse_error(v + "[PARAMS]\ncompliance_gain = -1\n").find("compliance_gain"), std::string::npos);
  EXPECT_NE(parse_error(v + "[PARAMS]\nprior_bias = 0.1\nprior_bias = 0.2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(parse_error(v + "[PRIOR]\nrule = * -> $prior:1.0\n").find("$prior"), std::string::npos);
  EXPECT_NE(parse_error("tokens = a b\n").find("outside of a section"), std::string::npos);
  EXPECT_NE(parse_error("[VOCAB]\ntokens = a b\n").find("missing [VOCAB] eos"), std::string::npos);
  EXPECT_NE(parse_error("[VOCAB]\ntokens = a a\neos = a\n").find("duplicate vocabulary token"), std::string::npos);
  EXPECT_NE(parse_error(v + "[VOCAB]\nflavor = x\n").find("unknown key 'flavor'"), std::string::npos);
}

TEST(TableLM, LoadErrors) {
  EXPECT_THROW(TableLM::load("/nonexistent/x.tablelm"), ConfigError);
  auto lm = TableLM::load(data_path("cobsat-mini.tablelm"));
  EXPECT_THROW(lm.with_params(1.5, 0.0), ConfigError);
  EXPECT_THROW(lm.with_params(0.5, -1.0), ConfigError);
}
