#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sps/tree.hpp"

namespace sps {

/// Child label standing for a bare token under a non-POS node.
inline constexpr const char* kTokenMarker = "#tok";

/// One-level production `parent -> children...`.
struct SyntacticRule {
  std::string parent;
  std::vector<std::string> children;

  /// "parent -> c1 c2 ..."
  std::string to_string() const;
  static SyntacticRule parse(std::string_view text);

  friend auto operator<=>(const SyntacticRule&, const SyntacticRule&) = default;
  friend bool operator==(const SyntacticRule&, const SyntacticRule&) = default;
};

struct RuleOptions {
  bool include_punct = true;
  std::string punct_label = "w";
};

/// One rule per internal node that has at least one internal child; POS
/// nodes contribute their label as a child, lexical productions are skipped.
std::vector<SyntacticRule> extract_rules(const ParseTree& tree, const RuleOptions& opts = {});

/// Multiset of string items (rule strings or tokens).
class Counts {
 public:
  void add(const std::string& item, std::uint64_t n = 1);
  Counts& operator+=(const Counts& other);
  Counts scaled(std::uint64_t factor) const;

  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t count(const std::string& item) const;
  bool empty() const noexcept { return total_ == 0; }
  const std::map<std::string, std::uint64_t>& items() const noexcept { return items_; }

 private:
  std::map<std::string, std::uint64_t> items_;
  std::uint64_t total_ = 0;
};

Counts rule_counts(const ParseTree& tree, const RuleOptions& opts = {});
Counts rule_counts(const std::vector<ParseTree>& trees, const RuleOptions& opts = {});
Counts token_counts(const Sentence& sentence);
Counts token_counts(const std::vector<ParseTree>& trees);

/// Empirical distribution: probabilities are positive and sum to one.
class RuleDistribution {
 public:
  /// Throws Errc::invalid_argument for empty counts.
  explicit RuleDistribution(const Counts& counts);

  const std::map<std::string, double>& support() const noexcept { return probs_; }
  std::uint64_t total_count() const noexcept { return total_; }
  double prob(const std::string& item) const;

 private:
  std::map<std::string, double> probs_;
  std::uint64_t total_;
};

/// Jensen-Shannon divergence in bits, in [0, 1].
double js_divergence(const RuleDistribution& p, const RuleDistribution& q);

enum class FeatureMode { rules, tokens };

/// Reference set S for distance computations. `distance(c)` equals
/// js_divergence(P_S, P_{S+c}) but only visits the candidate's own items:
/// every item of S that c lacks is scaled by the same factor, so their
/// contribution collapses to a closed form in the leftover mass.
class Reference {
 public:
  explicit Reference(Counts counts);

  /// Throws Errc::empty_features for an empty candidate.
  double distance(const Counts& candidate) const;

  const Counts& counts() const noexcept { return counts_; }

 private:
  Counts counts_;
};

/// D(c, S) = JS(S, S + c) evaluated directly on the two distributions.
double instance_distance(const Counts& candidate, const Counts& reference);

/// Sorted `parent -> children` lines, one per distinct rule.
std::string format_rule_inventory(const Counts& rules, bool with_counts = false);

}  // namespace sps
