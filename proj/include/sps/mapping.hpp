#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sps/tree.hpp"

namespace sps {

/// Label pattern element that matches any label, including a bare token.
inline constexpr const char* kWildcard = "*";
/// Rewrite value that keeps the original label.
inline constexpr const char* kKeepLabel = "=";

struct MappingPattern {
  std::string parent;                                 // label or "*"
  std::optional<std::vector<std::string>> children;  // absent: any children
};

struct MappingRewrite {
  std::optional<std::string> parent;                     // absent: parent left to context
  std::vector<std::optional<std::string>> children;     // per pattern position
};

struct MappingRule {
  MappingPattern pattern;
  MappingRewrite rewrite;
  int priority = 0;  // larger wins

  bool matches(const Node& node) const;
};

/// Priority-ordered rule table. Duplicate priorities are rejected at load
/// time so that rule choice never depends on file order.
class MappingTable {
 public:
  MappingTable(std::vector<MappingRule> rules, std::string default_label,
               const LabelInventory* inventory = nullptr);

  static MappingTable from_json(const nlohmann::json& j, const LabelInventory* inventory = nullptr);
  static MappingTable load(const std::filesystem::path& path, const LabelInventory* inventory = nullptr);
  nlohmann::json to_json() const;

  const std::vector<MappingRule>& rules() const noexcept { return rules_; }
  const std::string& default_label() const noexcept { return default_label_; }

  /// Highest-priority rule matching `node`, or nullptr.
  const MappingRule* best_match(const Node& node) const;

 private:
  std::vector<MappingRule> rules_;
  std::string default_label_;
};

struct ConversionReport {
  std::size_t trees = 0;
  std::size_t nodes = 0;
  std::size_t fallback_count = 0;
  std::map<std::string, std::size_t> fallbacks_by_label;  // keyed by source label

  ConversionReport& operator+=(const ConversionReport& other);
  nlohmann::json to_json() const;
};

struct ConversionOptions {
  bool strict = false;  // fallback to default_label becomes Errc::unmapped_node
};

/// Relabels every internal node top-down. A node takes the label assigned by
/// whichever applies with higher priority: its own best rule's parent
/// rewrite, or its parent's best rule's rewrite for its position. Nodes with
/// neither get the table default. Tokens and shape are untouched.
ParseTree convert(const ParseTree& tree, const MappingTable& table, const ConversionOptions& opts = {},
                  ConversionReport* report = nullptr);

struct CorpusConversion {
  std::vector<ParseTree> trees;
  ConversionReport report;
};

/// Element-wise convert. Strict-mode failures name the 0-based tree index.
CorpusConversion convert_corpus(const std::vector<ParseTree>& trees, const MappingTable& table,
                                const ConversionOptions& opts = {}, unsigned jobs = 1);

}  // namespace sps
