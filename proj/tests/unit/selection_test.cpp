#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "selection_oracle.hpp"
#include "sps/io.hpp"

using namespace sps;

namespace {

const std::vector<CriterionKind> kAllKinds = {CriterionKind::token, CriterionKind::conf,     CriterionKind::srs,
                                              CriterionKind::srs_conf, CriterionKind::csrs, CriterionKind::csrs_conf};

struct Refs {
  Counts source_tokens, source_rules, target_rules;
  References refs() const { return {Reference(source_tokens), Reference(source_rules), Reference(target_rules)}; }
};

Refs random_refs(Rng& rng) {
  const auto source = testkit::reference_trees(rng, 30);
  const auto target = testkit::reference_trees(rng, 30);
  return {token_counts(source), rule_counts(source), rule_counts(target)};
}

PseudoTree candidate(const char* text, double conf) {
  ParseTree t = parse_bracketed(text);
  return {t.tokens(), t, conf, false};
}

std::vector<std::size_t> run(const std::vector<PseudoTree>& cands, const CriterionConfig& cfg, const References& refs) {
  return select_top_k(score(cands, cfg, refs), cands, cfg);
}

}  // namespace

TEST(Criterion, NamesRoundTrip) {
  for (auto k : kAllKinds) EXPECT_EQ(parse_criterion(to_string(k)), k);
  EXPECT_EQ(parse_criterion("CSRs-Conf"), CriterionKind::csrs_conf);
  EXPECT_THROW(parse_criterion("bleu"), Error);
  EXPECT_TRUE(uses_confidence(CriterionKind::conf));
  EXPECT_TRUE(uses_confidence(CriterionKind::srs_conf));
  EXPECT_FALSE(uses_confidence(CriterionKind::csrs));
}

TEST(Criterion, ZeroKRejected) {
  CriterionConfig cfg;
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Score, ConfidenceOrdering) {
  const std::vector<PseudoTree> cands = {candidate("(sps (n a))", 0.9), candidate("(sps (n b))", 0.1)};
  CriterionConfig cfg{CriterionKind::conf, 2};
  EXPECT_EQ(run(cands, cfg, {}), (std::vector<std::size_t>{0, 1}));
}

TEST(Score, KnownProfileBeatsNovelRules) {
  const auto ref = rule_counts(std::vector<ParseTree>{parse_bracketed("(sps (subject (n a)) (predicate (v b)))")});
  const std::vector<PseudoTree> cands = {candidate("(sps (att (a x)) (ind (v y)))", 0.5),
                                         candidate("(sps (subject (n x)) (predicate (v y)))", 0.5)};
  References refs;
  refs.source_rules = Reference(ref);
  const auto scored = score(cands, {CriterionKind::srs, 1}, refs);
  ASSERT_EQ(scored.size(), 2u);
  EXPECT_LT(scored[1].score, scored[0].score);
  EXPECT_NEAR(scored[1].score, instance_distance(rule_counts(cands[1].tree), ref), 1e-12);
  EXPECT_EQ(select_top_k(scored, cands, {CriterionKind::srs, 1}), (std::vector<std::size_t>{1}));
}

TEST(Score, TokenTiesWhereRulesDiffer) {
  const auto target = rule_counts(std::vector<ParseTree>{
      parse_bracketed("(sps (subject (n 他)) (predicate (v 读) (object (n 报))))"),
      parse_bracketed("(sps (subject (r 她)) (predicate (v 写) (object (n 信))))"),
  });
  Counts source_tokens;
  for (const char* w : {"我", "看", "书", "他"}) source_tokens.add(w);
  const std::vector<PseudoTree> cands = {
      candidate("(sps (subject (n 我)) (predicate (v 看)) (object (n 书)))", 0.5),
      candidate("(sps (subject (n 我)) (predicate (v 看) (object (n 书))))", 0.5),
  };
  References refs{Reference(source_tokens), std::nullopt, Reference(target)};
  const auto tok = score(cands, {CriterionKind::token, 1}, refs);
  const auto csrs = score(cands, {CriterionKind::csrs, 1}, refs);
  EXPECT_EQ(tok[0].score, tok[1].score);
  EXPECT_LT(csrs[1].score, csrs[0].score);
}

TEST(Score, MissingReferenceAndSkippedCandidates) {
  const std::vector<PseudoTree> cands = {candidate("(sps (n a))", 0.4)};
  try {
    score(cands, {CriterionKind::csrs, 1}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::missing_reference);
  }
  References refs;
  refs.target_rules = Reference(rule_counts(parse_bracketed("(sps (subject (n a)))")));
  // "(sps a)" has no rule at all, and fallbacks are never scored.
  PseudoTree fb = candidate("(sps (subject (n a)))", 0.0);
  fb.fallback = true;
  EXPECT_TRUE(score({candidate("(sps a)", 0.4), fb}, {CriterionKind::csrs, 1}, refs).empty());
}

TEST(Select, TotalSelectionIsSorted) {
  Rng rng = make_rng(41, "select-total");
  const Refs r = random_refs(rng);
  const auto cands = testkit::random_pool(rng, 30);
  CriterionConfig cfg{CriterionKind::csrs, 30};
  const auto scored = score(cands, cfg, r.refs());
  const auto sel = select_top_k(scored, cands, cfg);
  EXPECT_EQ(sel.size(), scored.size());
  for (std::size_t i = 1; i < sel.size(); ++i) {
    auto at = [&](std::size_t idx) {
      return std::find_if(scored.begin(), scored.end(), [&](const Scored& s) { return s.index == idx; })->score;
    };
    EXPECT_LE(at(sel[i - 1]), at(sel[i]));
  }
}

TEST(Select, MatchesExhaustiveOracle) {
  Rng rng = make_rng(42, "select-oracle");
  for (int trial = 0; trial < 200; ++trial) {
    const Refs r = random_refs(rng);
    const auto cands = testkit::random_pool(rng, 1 + uniform_index(rng, 50));
    for (auto kind : kAllKinds)
      for (const char* combine : {"staged", "weighted"}) {
        if (!is_combined(kind) && std::string(combine) == "weighted") continue;
        CriterionConfig cfg{kind, 1 + uniform_index(rng, 12), 1 + uniform_index(rng, 3), combine, 0.3};
        const auto got = run(cands, cfg, r.refs());
        const auto want = testkit::oracle_select(cands, cfg, r.source_tokens, r.source_rules, r.target_rules);
        ASSERT_EQ(got, want) << "trial " << trial << " kind " << to_string(kind) << " " << combine;
      }
  }
}

TEST(Score, AgreesWithDirectDistance) {
  Rng rng = make_rng(47, "select-direct");
  for (int trial = 0; trial < 50; ++trial) {
    const Refs r = random_refs(rng);
    const auto cands = testkit::random_pool(rng, 30);
    for (auto kind : {CriterionKind::token, CriterionKind::srs, CriterionKind::csrs}) {
      for (const auto& s : score(cands, {kind, 1}, r.refs())) {
        const auto& c = cands[s.index];
        const double direct = kind == CriterionKind::token ? instance_distance(token_counts(c.sentence), r.source_tokens)
                              : kind == CriterionKind::srs ? instance_distance(rule_counts(c.tree), r.source_rules)
                                                           : instance_distance(rule_counts(c.tree), r.target_rules);
        ASSERT_NEAR(s.score, direct, 1e-12);
      }
    }
  }
}

TEST(Select, PermutationInvariance) {
  Rng rng = make_rng(43, "select-perm");
  for (int trial = 0; trial < 50; ++trial) {
    const Refs r = random_refs(rng);
    auto cands = testkit::random_pool(rng, 40);
    for (auto& c : cands)
      if (!c.fallback) c.confidence = 0.01 + 0.98 * uniform01(rng);  // distinct confidences
    for (auto kind : kAllKinds) {
      CriterionConfig cfg{kind, 8};
      auto key_set = [&](const std::vector<PseudoTree>& cs) {
        std::multiset<std::pair<std::string, double>> out;
        for (auto i : run(cs, cfg, r.refs())) out.insert({serialize(cs[i].tree), cs[i].confidence});
        return out;
      };
      const auto before = key_set(cands);
      auto shuffled = cands;
      for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[uniform_index(rng, i)]);
      ASSERT_EQ(key_set(shuffled), before) << to_string(kind);
    }
  }
}

TEST(Select, CombinedOutputWithinPrefilter) {
  Rng rng = make_rng(44, "select-contain");
  for (int trial = 0; trial < 50; ++trial) {
    const Refs r = random_refs(rng);
    const auto cands = testkit::random_pool(rng, 50);
    CriterionConfig combined{CriterionKind::csrs_conf, 5, 2};
    CriterionConfig plain{CriterionKind::csrs, 10};
    const auto top = run(cands, plain, r.refs());
    const std::set<std::size_t> allowed(top.begin(), top.end());
    for (auto i : run(cands, combined, r.refs())) ASSERT_TRUE(allowed.count(i));
  }
}

TEST(Select, ShortPoolReturnsEverything) {
  const std::vector<PseudoTree> cands = {candidate("(sps (n a))", 0.3), candidate("(sps (n b))", 0.6)};
  EXPECT_EQ(run(cands, {CriterionKind::conf, 5}, {}), (std::vector<std::size_t>{1, 0}));
}

TEST(Select, TiesBrokenByConfidenceThenSentence) {
  const std::vector<PseudoTree> cands = {candidate("(sps (subject (n b)))", 0.5), candidate("(sps (subject (n a)))", 0.5),
                                         candidate("(sps (subject (n c)))", 0.7)};
  References refs;
  refs.source_rules = Reference(rule_counts(parse_bracketed("(sps (subject (n x)))")));
  EXPECT_EQ(run(cands, {CriterionKind::srs, 3}, refs), (std::vector<std::size_t>{2, 1, 0}));
}

TEST(Select, DeterministicAcrossThreads) {
  Rng rng = make_rng(45, "select-jobs");
  const Refs r = random_refs(rng);
  const auto cands = testkit::random_pool(rng, 200);
  for (auto kind : kAllKinds) {
    CriterionConfig cfg{kind, 20};
    const auto a = score(cands, cfg, r.refs(), 1);
    const auto b = score(cands, cfg, r.refs(), 4);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i].score, b[i].score);
    EXPECT_EQ(select_top_k(a, cands, cfg), select_top_k(b, cands, cfg));
  }
}

// Holds for equal-size feature profiles only; see the dilution tests for
// mixed sizes.
TEST(Select, ScaledReferenceKeepsSelection) {
  Rng rng = make_rng(46, "select-scale");
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Refs r = random_refs(rng);
    Refs scaled{r.source_tokens.scaled(3), r.source_rules.scaled(3), r.target_rules.scaled(3)};
    std::vector<PseudoTree> cands;
    for (auto& c : testkit::random_pool(rng, 80))
      if (rule_counts(c.tree).total() == 4) cands.push_back(std::move(c));
    for (auto kind : kAllKinds) {
      CriterionConfig cfg{kind, 8};
      const auto a = run(cands, cfg, r.refs()), b = run(cands, cfg, scaled.refs());
      EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()), std::set<std::size_t>(b.begin(), b.end()))
          << "trial " << trial << " " << to_string(kind);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 300);
}

TEST(Select, WritesTreebankAndScores) {
  const auto dir = std::filesystem::temp_directory_path() / "sps_select_test";
  std::filesystem::create_directories(dir);
  const std::vector<PseudoTree> cands = {candidate("(sps (n a))", 0.3), candidate("(sps (n b))", 0.6)};
  CriterionConfig cfg{CriterionKind::conf, 1};
  const auto scored = score(cands, cfg, {});
  write_selection(dir / "sel.txt", cands, scored, select_top_k(scored, cands, cfg), cfg.kind);
  EXPECT_EQ(read_file(dir / "sel.txt"), "(sps (n b))\n");
  EXPECT_EQ(read_file(dir / "sel.txt.scores.tsv"), "id\tkind\tscore\tconfidence\n1\tconf\t-0.6\t0.6\n");
  std::filesystem::remove_all(dir);
}
