#include "sps/mapping.hpp"

#include <algorithm>
#include <set>

#include "sps/io.hpp"
#include "sps/parallel.hpp"

namespace sps {

namespace {

bool label_matches(const std::string& pattern, const Node& node) {
  if (pattern == kWildcard) return true;
  return !node.is_leaf() && node.label == pattern;
}

void check_rewrite_label(const std::string& label, const LabelInventory* inv, int priority) {
  if (label == kKeepLabel || !inv) return;
  if (!inv->contains(label))
    throw Error(Errc::unknown_label,
                "mapping rule " + std::to_string(priority) + " rewrites to unknown label '" + label + "'");
}

}  // namespace

bool MappingRule::matches(const Node& node) const {
  if (node.is_leaf() || !label_matches(pattern.parent, node)) return false;
  if (!pattern.children) return true;
  const auto& want = *pattern.children;
  if (want.size() != node.children.size()) return false;
  for (std::size_t i = 0; i < want.size(); ++i)
    if (!label_matches(want[i], node.children[i])) return false;
  return true;
}

MappingTable::MappingTable(std::vector<MappingRule> rules, std::string default_label,
                           const LabelInventory* inventory)
    : rules_(std::move(rules)), default_label_(std::move(default_label)) {
  if (rules_.empty()) throw Error(Errc::config, "mapping table has no rules");
  if (!valid_token(default_label_)) throw Error(Errc::config, "mapping table needs a default_label");
  if (inventory && !inventory->is_sps(default_label_))
    throw Error(Errc::unknown_label, "default_label '" + default_label_ + "' is not an SPS label");
  std::set<int> seen;
  for (const auto& r : rules_) {
    if (!seen.insert(r.priority).second)
      throw Error(Errc::duplicate_priority, "two mapping rules share priority " + std::to_string(r.priority));
    if (r.pattern.parent.empty()) throw Error(Errc::config, "mapping rule pattern needs a parent label");
    if (r.pattern.children) {
      if (r.pattern.children->empty())
        throw Error(Errc::config, "mapping rule " + std::to_string(r.priority) + " has an empty child pattern");
      if (!r.rewrite.children.empty() && r.rewrite.children.size() != r.pattern.children->size())
        throw Error(Errc::config,
                    "mapping rule " + std::to_string(r.priority) + " rewrites a different number of children");
    } else if (!r.rewrite.children.empty()) {
      throw Error(Errc::config,
                  "mapping rule " + std::to_string(r.priority) + " rewrites children without a child pattern");
    }
    if (r.rewrite.parent) check_rewrite_label(*r.rewrite.parent, inventory, r.priority);
    for (const auto& c : r.rewrite.children)
      if (c) check_rewrite_label(*c, inventory, r.priority);
  }
  std::sort(rules_.begin(), rules_.end(),
            [](const MappingRule& a, const MappingRule& b) { return a.priority > b.priority; });
}

MappingTable MappingTable::from_json(const nlohmann::json& j, const LabelInventory* inventory) {
  try {
    std::vector<MappingRule> rules;
    for (const auto& jr : j.at("rules")) {
      MappingRule r;
      const auto& jp = jr.at("pattern");
      r.pattern.parent = jp.at("parent").get<std::string>();
      if (jp.contains("children") && !jp.at("children").is_null())
        r.pattern.children = jp.at("children").get<std::vector<std::string>>();
      if (jr.contains("rewrite")) {
        const auto& jw = jr.at("rewrite");
        if (jw.contains("parent") && !jw.at("parent").is_null()) r.rewrite.parent = jw.at("parent").get<std::string>();
        if (jw.contains("children")) {
          for (const auto& c : jw.at("children")) {
            if (c.is_null())
              r.rewrite.children.emplace_back(std::nullopt);
            else
              r.rewrite.children.emplace_back(c.get<std::string>());
          }
        }
      }
      r.priority = jr.at("priority").get<int>();
      rules.push_back(std::move(r));
    }
    return MappingTable(std::move(rules), j.at("default_label").get<std::string>(), inventory);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, std::string("mapping table: ") + e.what());
  }
}

MappingTable MappingTable::load(const std::filesystem::path& path, const LabelInventory* inventory) {
  try {
    return from_json(read_json(path), inventory);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

nlohmann::json MappingTable::to_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : rules_) {
    nlohmann::json jp = {{"parent", r.pattern.parent}};
    if (r.pattern.children) jp["children"] = *r.pattern.children;
    nlohmann::json jw = nlohmann::json::object();
    jw["parent"] = r.rewrite.parent ? nlohmann::json(*r.rewrite.parent) : nlohmann::json(nullptr);
    if (!r.rewrite.children.empty()) {
      jw["children"] = nlohmann::json::array();
      for (const auto& c : r.rewrite.children) jw["children"].push_back(c ? nlohmann::json(*c) : nlohmann::json(nullptr));
    }
    rules.push_back({{"pattern", jp}, {"rewrite", jw}, {"priority", r.priority}});
  }
  return {{"default_label", default_label_}, {"rules", rules}};
}

const MappingRule* MappingTable::best_match(const Node& node) const {
  for (const auto& r : rules_)
    if (r.matches(node)) return &r;
  return nullptr;
}

ConversionReport& ConversionReport::operator+=(const ConversionReport& other) {
  trees += other.trees;
  nodes += other.nodes;
  fallback_count += other.fallback_count;
  for (const auto& [k, v] : other.fallbacks_by_label) fallbacks_by_label[k] += v;
  return *this;
}

nlohmann::json ConversionReport::to_json() const {
  return {{"trees", trees},
          {"nodes", nodes},
          {"fallback_count", fallback_count},
          {"fallbacks_by_label", fallbacks_by_label}};
}

namespace {

struct Assignment {
  std::string label;
  int priority;
};

std::string resolve(const std::string& rewrite, const Node& node) {
  return rewrite == kKeepLabel ? node.label : rewrite;
}

Node convert_node(const Node& node, const MappingTable& table, const std::optional<Assignment>& from_parent,
                  const ConversionOptions& opts, ConversionReport& report) {
  if (node.is_leaf()) return node;
  ++report.nodes;

  const MappingRule* rule = table.best_match(node);
  std::optional<Assignment> own;
  if (rule && rule->rewrite.parent) own = Assignment{resolve(*rule->rewrite.parent, node), rule->priority};

  std::string label;
  if (own && (!from_parent || own->priority >= from_parent->priority)) {
    label = own->label;
  } else if (from_parent) {
    label = from_parent->label;
  } else {
    if (opts.strict) throw Error(Errc::unmapped_node, "no mapping rule covers node '" + node.label + "'");
    ++report.fallback_count;
    ++report.fallbacks_by_label[node.label];
    label = table.default_label();
  }

  std::vector<Node> kids;
  kids.reserve(node.children.size());
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    std::optional<Assignment> ctx;
    if (rule && i < rule->rewrite.children.size() && rule->rewrite.children[i])
      ctx = Assignment{resolve(*rule->rewrite.children[i], node.children[i]), rule->priority};
    kids.push_back(convert_node(node.children[i], table, ctx, opts, report));
  }
  return Node::internal(std::move(label), std::move(kids));
}

}  // namespace

ParseTree convert(const ParseTree& tree, const MappingTable& table, const ConversionOptions& opts,
                  ConversionReport* report) {
  ConversionReport local;
  ParseTree out(convert_node(tree.root(), table, std::nullopt, opts, local));
  local.trees = 1;
  if (report) *report += local;
  return out;
}

CorpusConversion convert_corpus(const std::vector<ParseTree>& trees, const MappingTable& table,
                                const ConversionOptions& opts, unsigned jobs) {
  std::vector<std::optional<ParseTree>> out(trees.size());
  std::vector<ConversionReport> reports(trees.size());
  parallel_for(trees.size(), jobs, [&](std::size_t i) {
    try {
      out[i] = convert(trees[i], table, opts, &reports[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "tree " + std::to_string(i) + ": " + e.what());
    }
  });
  CorpusConversion result;
  result.trees.reserve(trees.size());
  for (std::size_t i = 0; i < trees.size(); ++i) {
    result.trees.push_back(std::move(*out[i]));
    result.report += reports[i];
  }
  return result;
}

}  // namespace sps
