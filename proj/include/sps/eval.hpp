#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "sps/tree.hpp"

namespace sps {

enum class PunctMode {
  include,  // punctuation tokens and their spans count like any other
  exclude,  // punctuation tokens are deleted before spans are read off
  suffix,   // punctuation joins the preceding token; a leading one stays
};

PunctMode parse_punct_mode(std::string_view name);

struct EvalOptions {
  PunctMode punct = PunctMode::include;
  bool include_pos = false;   // count preterminal spans
  bool include_root = false;
  std::string punct_label = "w";
};

using Span = std::tuple<std::string, std::size_t, std::size_t>;  // label, start, end (exclusive)

/// Labeled spans of `tree` under `opts`, sorted.
std::vector<Span> spans(const ParseTree& tree, const EvalOptions& opts = {});

struct SpanCounts {
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  SpanCounts& operator+=(const SpanCounts& o) {
    matched += o.matched;
    predicted += o.predicted;
    gold += o.gold;
    return *this;
  }
  friend bool operator==(const SpanCounts&, const SpanCounts&) = default;
};

struct PairScore {
  SpanCounts total;
  std::map<std::string, SpanCounts> by_label;
};

/// Multiset intersection of labeled spans. Throws Errc::token_mismatch when
/// the two trees do not cover the same tokens.
PairScore score_pair(const ParseTree& pred, const ParseTree& gold, const EvalOptions& opts = {});

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Percentages in [0, 100]; F1 is 0 when P + R is 0.
Prf prf(const SpanCounts& c);

struct ScoreReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  SpanCounts counts;
  std::map<std::string, SpanCounts> by_label;
  std::size_t sentences = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Micro-averaged over summed counts. Throws Errc::empty_corpus and
/// Errc::length_mismatch; token mismatches name the 0-based pair index.
ScoreReport score_corpus(const std::vector<ParseTree>& preds, const std::vector<ParseTree>& golds,
                         const EvalOptions& opts = {}, unsigned jobs = 1);

}  // namespace sps
