#pragma once

#include <cmath>
#include <tuple>
#include <vector>

#include "sps/random.hpp"
#include "sps/selection.hpp"

namespace sps::testkit {

/// Brute-force reference for score + select_top_k. Every candidate's position
/// is its count of strictly better rivals, so no sort routine is shared with
/// the library. Distances come from Reference::distance on the 2^-40 grid;
/// their agreement with instance_distance is checked separately.
inline std::vector<std::size_t> oracle_select(const std::vector<PseudoTree>& cands, const CriterionConfig& cfg,
                                              const Counts& source_tokens, const Counts& source_rules,
                                              const Counts& target_rules) {
  struct Row {
    std::size_t index;
    double score, confidence;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto& c = cands[i];
    if (c.fallback) continue;
    double s = 0;
    switch (cfg.kind) {
      case CriterionKind::conf: s = -c.confidence; break;
      case CriterionKind::token: s = Reference(source_tokens).distance(token_counts(c.sentence)); break;
      case CriterionKind::srs:
      case CriterionKind::srs_conf: {
        const auto f = rule_counts(c.tree, cfg.rule_options);
        if (f.empty()) continue;
        s = Reference(source_rules).distance(f);
        break;
      }
      case CriterionKind::csrs:
      case CriterionKind::csrs_conf: {
        const auto f = rule_counts(c.tree, cfg.rule_options);
        if (f.empty()) continue;
        s = Reference(target_rules).distance(f);
        break;
      }
    }
    if (cfg.kind != CriterionKind::conf) s = std::round(s * 1099511627776.0) / 1099511627776.0;
    rows.push_back({i, s, c.confidence});
  }
  const bool weighted = is_combined(cfg.kind) && cfg.combine == "weighted";
  if (weighted)
    for (auto& r : rows) r.score = cfg.weight * r.score + (1 - cfg.weight) * (1 - r.confidence);

  auto key = [&](const Row& r) { return std::make_tuple(r.score, -r.confidence, cands[r.index].sentence, r.index); };
  auto ranks = [&](const std::vector<Row>& set, auto&& better) {
    std::vector<std::pair<std::size_t, Row>> out;
    for (const auto& a : set) {
      std::size_t rank = 0;
      for (const auto& b : set) rank += better(b, a) ? 1 : 0;
      out.push_back({rank, a});
    }
    return out;
  };
  auto rule_better = [&](const Row& a, const Row& b) { return key(a) < key(b); };

  std::vector<Row> pool = rows;
  std::vector<std::pair<std::size_t, Row>> ranked;
  if (is_combined(cfg.kind) && !weighted) {
    std::vector<Row> pre;
    for (const auto& [rank, r] : ranks(rows, rule_better))
      if (rank < cfg.prefilter_multiplier * cfg.k) pre.push_back(r);
    ranked = ranks(pre, [&](const Row& a, const Row& b) {
      return std::make_tuple(-a.confidence, key(a)) < std::make_tuple(-b.confidence, key(b));
    });
  } else {
    ranked = ranks(rows, rule_better);
  }
  std::vector<std::size_t> out(std::min(cfg.k, ranked.size()));
  for (const auto& [rank, r] : ranked)
    if (rank < out.size()) out[rank] = r.index;
  return out;
}

/// Random candidate pool with repeated rule profiles and confidences, so
/// that ties are common.
inline std::vector<PseudoTree> random_pool(Rng& rng, std::size_t n) {
  static const std::vector<std::string> shapes = {
      "(sps (subject (n A)) (predicate (v B)) (w C))",
      "(sps (subject (r A)) (predicate (v B) (object (n C))))",
      "(sps (adv (d A)) (subject (n B)) (predicate (v C)))",
      "(sps (subject (att (a A)) (n B)) (predicate (v C)))",
      "(sps (n A) (v B) (n C))",
      "(sps (subject (n A)) (predicate (v B) (comp (a C))))",
  };
  static const std::vector<std::string> words = {"我", "书", "看", "好", "很", "。"};
  static const std::vector<double> confs = {0.2, 0.35, 0.5, 0.5, 0.8, 0.9};
  std::vector<PseudoTree> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text = shapes[uniform_index(rng, shapes.size())];
    for (const char* slot : {"A", "B", "C"}) text.replace(text.find(slot), 1, words[uniform_index(rng, words.size())]);
    ParseTree t = parse_bracketed(text);
    const bool fallback = uniform01(rng) < 0.05;
    out.push_back({t.tokens(), t, fallback ? 0.0 : confs[uniform_index(rng, confs.size())], fallback});
  }
  return out;
}

inline std::vector<ParseTree> reference_trees(Rng& rng, std::size_t n) {
  std::vector<ParseTree> out;
  for (const auto& c : random_pool(rng, n)) out.push_back(c.tree);
  return out;
}

}  // namespace sps::testkit
