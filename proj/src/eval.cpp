#include "sps/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <sstream>

#include "sps/parallel.hpp"

namespace sps {

PunctMode parse_punct_mode(std::string_view name) {
  if (name == "include") return PunctMode::include;
  if (name == "exclude") return PunctMode::exclude;
  if (name == "suffix") return PunctMode::suffix;
  throw Error(Errc::config, "unknown punctuation mode '" + std::string(name) + "'");
}

namespace {

struct Walker {
  const EvalOptions& opts;
  std::vector<std::optional<std::size_t>> position;  // per leaf; empty when dropped
  std::size_t leaf = 0;
  std::vector<Span> out;

  bool is_punct(const Node& n) const { return n.is_preterminal() && n.label == opts.punct_label; }

  // First pass: map every leaf to a word position.
  void index(const Node& n, bool under_punct, std::size_t& next, bool& seen_word) {
    if (n.is_leaf()) {
      if (!under_punct || opts.punct == PunctMode::include) {
        position.push_back(next++);
        seen_word = true;
      } else if (opts.punct == PunctMode::suffix && seen_word) {
        position.push_back(next - 1);
      } else if (opts.punct == PunctMode::suffix) {
        position.push_back(next++);  // leading punctuation has nothing to attach to
      } else {
        position.push_back(std::nullopt);
      }
      return;
    }
    for (const auto& c : n.children) index(c, under_punct || is_punct(n), next, seen_word);
  }

  // Returns the [lo, hi) range of counted positions under n.
  std::optional<std::pair<std::size_t, std::size_t>> collect(const Node& n, bool is_root) {
    if (n.is_leaf()) {
      const auto p = position[leaf++];
      if (!p) return std::nullopt;
      return std::pair{*p, *p + 1};
    }
    std::optional<std::pair<std::size_t, std::size_t>> range;
    for (const auto& c : n.children) {
      auto r = collect(c, false);
      if (!r) continue;
      if (!range)
        range = r;
      else
        range = std::pair{std::min(range->first, r->first), std::max(range->second, r->second)};
    }
    if (!range) return range;
    const bool keep = (!is_root || opts.include_root) && (!n.is_preterminal() || opts.include_pos) &&
                      (opts.punct == PunctMode::include || n.label != opts.punct_label);
    if (keep) out.emplace_back(n.label, range->first, range->second);
    return range;
  }
};

}  // namespace

std::vector<Span> spans(const ParseTree& tree, const EvalOptions& opts) {
  Walker w{opts, {}, 0, {}};
  std::size_t next = 0;
  bool seen_word = false;
  w.index(tree.root(), false, next, seen_word);
  w.collect(tree.root(), true);
  std::sort(w.out.begin(), w.out.end());
  return w.out;
}

PairScore score_pair(const ParseTree& pred, const ParseTree& gold, const EvalOptions& opts) {
  if (pred.tokens() != gold.tokens())
    throw Error(Errc::token_mismatch, "predicted and gold trees cover different tokens: '" +
                                          join_tokens(pred.tokens()) + "' vs '" + join_tokens(gold.tokens()) + "'");
  const auto p = spans(pred, opts);
  const auto g = spans(gold, opts);
  PairScore s;
  for (const auto& sp : p) ++s.by_label[std::get<0>(sp)].predicted;
  for (const auto& sp : g) ++s.by_label[std::get<0>(sp)].gold;
  // both sorted: multiset intersection by merge
  std::size_t i = 0, j = 0;
  while (i < p.size() && j < g.size()) {
    if (p[i] < g[j]) {
      ++i;
    } else if (g[j] < p[i]) {
      ++j;
    } else {
      ++s.by_label[std::get<0>(p[i])].matched;
      ++i, ++j;
    }
  }
  for (const auto& [label, c] : s.by_label) s.total += c;
  return s;
}

Prf prf(const SpanCounts& c) {
  Prf r;
  r.precision = c.predicted ? 100.0 * static_cast<double>(c.matched) / static_cast<double>(c.predicted) : 0.0;
  r.recall = c.gold ? 100.0 * static_cast<double>(c.matched) / static_cast<double>(c.gold) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

ScoreReport score_corpus(const std::vector<ParseTree>& preds, const std::vector<ParseTree>& golds,
                         const EvalOptions& opts, unsigned jobs) {
  if (golds.empty()) throw Error(Errc::empty_corpus, "cannot score an empty corpus");
  if (preds.size() != golds.size())
    throw Error(Errc::length_mismatch, "predicted corpus has " + std::to_string(preds.size()) +
                                           " trees but gold has " + std::to_string(golds.size()));
  std::vector<PairScore> pairs(golds.size());
  parallel_for(golds.size(), jobs, [&](std::size_t i) {
    try {
      pairs[i] = score_pair(preds[i], golds[i], opts);
    } catch (const Error& e) {
      throw Error(e.code(), "pair " + std::to_string(i) + ": " + e.what());
    }
  });
  ScoreReport r;
  r.sentences = golds.size();
  for (const auto& p : pairs) {
    r.counts += p.total;
    for (const auto& [label, c] : p.by_label) r.by_label[label] += c;
  }
  const Prf t = prf(r.counts);
  r.precision = t.precision;
  r.recall = t.recall;
  r.f1 = t.f1;
  return r;
}

nlohmann::json ScoreReport::to_json() const {
  nlohmann::json j = {{"precision", precision}, {"recall", recall},    {"f1", f1},
                      {"matched", counts.matched}, {"predicted", counts.predicted}, {"gold", counts.gold},
                      {"sentences", sentences}};
  j["labels"] = nlohmann::json::object();
  for (const auto& [label, c] : by_label) {
    const Prf p = prf(c);
    j["labels"][label] = {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1},
                          {"matched", c.matched},     {"predicted", c.predicted}, {"gold", c.gold}};
  }
  return j;
}

std::string ScoreReport::to_table() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %8s %8s %8s\n", "label", "P", "R", "F1", "match", "pred", "gold");
  os << buf;
  auto row = [&](const std::string& label, const SpanCounts& c) {
    const Prf p = prf(c);
    std::snprintf(buf, sizeof buf, "%-12s %8.2f %8.2f %8.2f %8zu %8zu %8zu\n", label.c_str(), p.precision, p.recall,
                  p.f1, c.matched, c.predicted, c.gold);
    os << buf;
  };
  for (const auto& [label, c] : by_label) row(label, c);
  row("ALL", counts);
  return os.str();
}

}  // namespace sps
