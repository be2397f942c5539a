#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sps/parser.hpp"
#include "sps/rules.hpp"

namespace sps {

enum class CriterionKind { token, conf, srs, srs_conf, csrs, csrs_conf };

std::string to_string(CriterionKind kind);
/// Accepts the names above (case-insensitive); throws Errc::config.
CriterionKind parse_criterion(std::string_view name);
bool uses_confidence(CriterionKind kind) noexcept;
bool is_combined(CriterionKind kind) noexcept;

struct CriterionConfig {
  CriterionKind kind = CriterionKind::csrs;
  std::size_t k = 1;
  std::size_t prefilter_multiplier = 2;
  /// "staged": prefilter by rule score, then pick by confidence.
  /// "weighted": rank by weight * rule score + (1 - weight) * (1 - confidence).
  std::string combine = "staged";
  double weight = 0.5;
  RuleOptions rule_options;

  void validate() const;
};

/// Reference distributions. token needs source_tokens, srs/srs_conf need
/// source_rules and csrs/csrs_conf need target_rules (rules of the converted
/// target-domain treebank).
struct References {
  std::optional<Reference> source_tokens;
  std::optional<Reference> source_rules;
  std::optional<Reference> target_rules;
};

struct Scored {
  std::size_t index = 0;  // into the candidate list
  double score = 0.0;     // lower is better; the rule distance for combined kinds
  double confidence = 0.0;
};

/// Scores every usable candidate. Fallback parses and candidates without
/// any feature (no rule, or no token) are skipped, so the result may be
/// shorter than `candidates`. Distances are rounded to a 2^-40 grid so that
/// candidates with mathematically equal distances tie exactly instead of
/// being ordered by rounding noise.
std::vector<Scored> score(const std::vector<PseudoTree>& candidates, const CriterionConfig& cfg,
                          const References& refs, unsigned jobs = 1);

/// Indices of the selected candidates, best first. Ties are broken by
/// confidence (higher first), then by sentence, then by position.
std::vector<std::size_t> select_top_k(const std::vector<Scored>& scored, const std::vector<PseudoTree>& candidates,
                                      const CriterionConfig& cfg);

/// Writes the chosen trees as a treebank and `<path>.scores.tsv` with
/// candidate id, kind, score and confidence per line.
void write_selection(const std::filesystem::path& path, const std::vector<PseudoTree>& candidates,
                     const std::vector<Scored>& scored, const std::vector<std::size_t>& selected,
                     CriterionKind kind);

}  // namespace sps
