#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "random_pairs.hpp"
#include "sps/eval.hpp"
#include "sps/io.hpp"

using namespace sps;

namespace {

const std::filesystem::path kFixtures = SPS_FIXTURES_DIR;

struct GoldenPair {
  SpanCounts counts;
  ParseTree pred, gold;
};

std::vector<GoldenPair> load_golden() {
  std::vector<GoldenPair> out;
  for (const auto& line : split_lines(read_file(kFixtures / "eval_golden.tsv"))) {
    if (line.empty() || line[0] == '#') continue;
    const auto first_tab = line.find('\t'), second_tab = line.find('\t', first_tab + 1);
    const auto nums = split_ws(line.substr(0, first_tab));
    out.push_back({{std::stoul(nums[0]), std::stoul(nums[1]), std::stoul(nums[2])},
                   parse_bracketed(line.substr(first_tab + 1, second_tab - first_tab - 1)),
                   parse_bracketed(line.substr(second_tab + 1))});
  }
  return out;
}

}  // namespace

TEST(Spans, DefaultsExcludeRootAndPos) {
  const auto t = parse_bracketed("(sps (subject (n 我)) (predicate (v 看) (object (n 书))) (w 。))");
  EXPECT_EQ(spans(t), (std::vector<Span>{{"object", 2, 3}, {"predicate", 1, 3}, {"subject", 0, 1}}));
  EvalOptions all;
  all.include_pos = true;
  all.include_root = true;
  EXPECT_EQ(spans(t, all).size(), 8u);
}

TEST(Spans, AdverbialPunctuation) {
  const auto t = read_treebank(kFixtures / "pos_nesting_expected.txt").at(0);
  EvalOptions with_pos;
  with_pos.include_pos = true;
  EvalOptions without_w = with_pos;
  without_w.punct = PunctMode::exclude;
  EXPECT_EQ(spans(t, with_pos).size(), 3u);
  EXPECT_EQ(spans(t, without_w).size(), 2u);
  EXPECT_EQ(spans(t, without_w), (std::vector<Span>{{"t", 0, 1}, {"t", 1, 2}}));
}

TEST(Spans, SuffixModeAttachesPunctuation) {
  const auto t = parse_bracketed("(sps (subject (n 我)) (w ，) (predicate (v 走)) (w 。))");
  EvalOptions o;
  o.punct = PunctMode::suffix;
  EXPECT_EQ(spans(t, o), (std::vector<Span>{{"predicate", 1, 2}, {"subject", 0, 1}}));
  const auto lead = parse_bracketed("(sps (w “) (subject (n 我)) (predicate (v 走)))");
  EXPECT_EQ(spans(lead, o), (std::vector<Span>{{"predicate", 2, 3}, {"subject", 1, 2}}));
  EXPECT_EQ(parse_punct_mode("suffix"), PunctMode::suffix);
  EXPECT_THROW(parse_punct_mode("drop"), Error);
}

TEST(ScorePair, Identity) {
  const auto t = parse_bracketed("(sps (subject (n 我)) (predicate (v 看) (object (n 书))))");
  const auto s = score_pair(t, t);
  EXPECT_EQ(s.total.matched, s.total.gold);
  EXPECT_EQ(s.total.predicted, s.total.gold);
  EXPECT_DOUBLE_EQ(prf(s.total).f1, 100.0);
}

TEST(ScorePair, FlatAgainstStructured) {
  const auto gold = parse_bracketed("(sps (subject (att (a 红)) (n 花)) (predicate (v 开) (comp (a 好))))");
  const auto flat = parse_bracketed("(sps (a 红) (n 花) (v 开) (a 好))");
  EvalOptions o;
  o.include_root = true;
  const auto s = score_pair(flat, gold, o);
  EXPECT_EQ(s.total.gold, 5u);
  EXPECT_EQ(s.total.predicted, 1u);
  EXPECT_EQ(s.total.matched, 1u);
  EXPECT_EQ(score_pair(flat, gold).total.matched, 0u);
}

TEST(ScorePair, TokenMismatch) {
  try {
    score_pair(parse_bracketed("(sps (n a))"), parse_bracketed("(sps (n b))"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::token_mismatch);
  }
}

TEST(ScorePair, DuplicateSpansCountAsMultiset) {
  const auto gold = parse_bracketed("(sps (adv (adv (d 很))) (v 好))");
  const auto pred = parse_bracketed("(sps (adv (d 很)) (v 好))");
  const auto s = score_pair(pred, gold);
  EXPECT_EQ(s.total, (SpanCounts{1, 1, 2}));
}

TEST(Corpus, GoldenSuite) {
  const auto pairs = load_golden();
  ASSERT_EQ(pairs.size(), 3u);
  std::vector<ParseTree> preds, golds;
  SpanCounts sum;
  for (const auto& p : pairs) {
    EXPECT_EQ(score_pair(p.pred, p.gold).total, p.counts);
    sum += p.counts;
    preds.push_back(p.pred);
    golds.push_back(p.gold);
  }
  const auto report = score_corpus(preds, golds);
  EXPECT_EQ(report.counts, sum);
  EXPECT_NEAR(report.precision, 62.50, 0.01);
  EXPECT_NEAR(report.recall, 55.56, 0.01);
  EXPECT_NEAR(report.f1, 58.82, 0.01);
  EXPECT_EQ(report.sentences, 3u);
  EXPECT_NE(report.to_table().find("ALL"), std::string::npos);
  EXPECT_EQ(report.to_json().at("matched"), 5);
}

TEST(Corpus, Errors) {
  try {
    score_corpus({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_corpus);
  }
  const auto t = parse_bracketed("(sps (n a))");
  try {
    score_corpus({t}, {t, t});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::length_mismatch);
  }
}

TEST(Corpus, SymmetryOnRandomPairs) {
  Rng rng = make_rng(51, "eval-sym");
  for (int i = 0; i < 100; ++i) {
    const auto tokens = testkit::random_tokens(rng);
    const auto a = testkit::random_tree_over(rng, tokens), b = testkit::random_tree_over(rng, tokens);
    for (auto mode : {PunctMode::include, PunctMode::exclude, PunctMode::suffix}) {
      EvalOptions o;
      o.punct = mode;
      o.include_pos = i % 2 == 0;
      const auto ab = score_corpus({a}, {b}, o), ba = score_corpus({b}, {a}, o);
      ASSERT_EQ(ab.precision, ba.recall);
      ASSERT_EQ(ab.recall, ba.precision);
      ASSERT_EQ(ab.f1, ba.f1);
      ASSERT_LE(ab.counts.matched, std::min(ab.counts.predicted, ab.counts.gold));
    }
  }
}

TEST(Corpus, ReorderAndIdentityPairs) {
  Rng rng = make_rng(52, "eval-order");
  std::vector<ParseTree> preds, golds;
  for (int i = 0; i < 40; ++i) {
    const auto tokens = testkit::random_tokens(rng);
    preds.push_back(testkit::random_tree_over(rng, tokens));
    golds.push_back(testkit::random_tree_over(rng, tokens));
  }
  const auto base = score_corpus(preds, golds);
  auto p2 = preds, g2 = golds;
  for (std::size_t i = p2.size(); i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::swap(p2[i - 1], p2[j]);
    std::swap(g2[i - 1], g2[j]);
  }
  EXPECT_EQ(score_corpus(p2, g2, {}, 4).counts, base.counts);
  EXPECT_NEAR(score_corpus(p2, g2).f1, base.f1, 1e-12);

  double f1 = base.f1;
  for (int i = 0; i < 10; ++i) {
    const auto t = testkit::random_tree_over(rng, testkit::random_tokens(rng));
    preds.push_back(t);
    golds.push_back(t);
    const double next = score_corpus(preds, golds).f1;
    ASSERT_GE(next + 1e-12, f1);
    f1 = next;
  }
}

TEST(Corpus, PrfEdgeCases) {
  EXPECT_EQ(prf({0, 0, 0}).f1, 0.0);
  const Prf p = prf({1, 2, 4});
  EXPECT_DOUBLE_EQ(p.precision, 50.0);
  EXPECT_DOUBLE_EQ(p.recall, 25.0);
  EXPECT_NEAR(p.f1, 2 * 50.0 * 25.0 / 75.0, 1e-12);
}
