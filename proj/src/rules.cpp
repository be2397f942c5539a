#include "sps/rules.hpp"

#include <algorithm>
#include <cmath>

#include "sps/io.hpp"

namespace sps {

std::string SyntacticRule::to_string() const {
  std::string s = parent + " ->";
  for (const auto& c : children) {
    s += ' ';
    s += c;
  }
  return s;
}

SyntacticRule SyntacticRule::parse(std::string_view text) {
  auto parts = split_ws(text);
  if (parts.size() < 3 || parts[1] != "->")
    throw Error(Errc::malformed, "expected 'parent -> child ...', got '" + std::string(text) + "'");
  return SyntacticRule{parts[0], std::vector<std::string>(parts.begin() + 2, parts.end())};
}

namespace {

void collect_rules(const Node& n, const RuleOptions& opts, std::vector<SyntacticRule>& out) {
  if (n.is_leaf()) return;
  bool has_internal = false;
  for (const auto& c : n.children) has_internal = has_internal || !c.is_leaf();
  if (has_internal) {
    SyntacticRule r{n.label, {}};
    for (const auto& c : n.children) {
      if (c.is_leaf()) {
        r.children.emplace_back(kTokenMarker);
      } else if (opts.include_punct || c.label != opts.punct_label) {
        r.children.push_back(c.label);
      }
    }
    if (!r.children.empty()) out.push_back(std::move(r));
  }
  for (const auto& c : n.children) collect_rules(c, opts, out);
}

}  // namespace

std::vector<SyntacticRule> extract_rules(const ParseTree& tree, const RuleOptions& opts) {
  std::vector<SyntacticRule> out;
  collect_rules(tree.root(), opts, out);
  return out;
}

void Counts::add(const std::string& item, std::uint64_t n) {
  if (n == 0) return;
  items_[item] += n;
  total_ += n;
}

Counts& Counts::operator+=(const Counts& other) {
  for (const auto& [k, v] : other.items_) add(k, v);
  return *this;
}

Counts Counts::scaled(std::uint64_t factor) const {
  Counts out;
  for (const auto& [k, v] : items_) out.add(k, v * factor);
  return out;
}

std::uint64_t Counts::count(const std::string& item) const {
  auto it = items_.find(item);
  return it == items_.end() ? 0 : it->second;
}

Counts rule_counts(const ParseTree& tree, const RuleOptions& opts) {
  Counts c;
  for (const auto& r : extract_rules(tree, opts)) c.add(r.to_string());
  return c;
}

Counts rule_counts(const std::vector<ParseTree>& trees, const RuleOptions& opts) {
  Counts c;
  for (const auto& t : trees) c += rule_counts(t, opts);
  return c;
}

Counts token_counts(const Sentence& sentence) {
  Counts c;
  for (const auto& t : sentence) c.add(t);
  return c;
}

Counts token_counts(const std::vector<ParseTree>& trees) {
  Counts c;
  for (const auto& t : trees) c += token_counts(t.tokens());
  return c;
}

RuleDistribution::RuleDistribution(const Counts& counts) : total_(counts.total()) {
  if (counts.empty()) throw Error(Errc::invalid_argument, "distribution over an empty multiset");
  const double n = static_cast<double>(total_);
  for (const auto& [k, v] : counts.items()) probs_.emplace(k, static_cast<double>(v) / n);
}

double RuleDistribution::prob(const std::string& item) const {
  auto it = probs_.find(item);
  return it == probs_.end() ? 0.0 : it->second;
}

namespace {

// 0.5 * (p log2(p/m) + q log2(q/m)) with m = (p + q) / 2 and 0 log 0 = 0.
double js_term(double p, double q) {
  const double m = 0.5 * (p + q);
  double t = 0.0;
  if (p > 0.0) t += p * std::log2(p / m);
  if (q > 0.0) t += q * std::log2(q / m);
  return 0.5 * t;
}

double clamp_unit(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

double js_divergence(const RuleDistribution& p, const RuleDistribution& q) {
  // Merge-walk the two sorted supports; each key contributes one symmetric term.
  const auto& a = p.support();
  const auto& b = q.support();
  auto ia = a.begin();
  auto ib = b.begin();
  double js = 0.0;
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      js += js_term(ia->second, 0.0);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      js += js_term(0.0, ib->second);
      ++ib;
    } else {
      js += js_term(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return clamp_unit(js);
}

Reference::Reference(Counts counts) : counts_(std::move(counts)) {
  if (counts_.empty()) throw Error(Errc::missing_reference, "reference distribution is empty");
}

double Reference::distance(const Counts& candidate) const {
  if (candidate.empty()) throw Error(Errc::empty_features, "candidate has no features");
  const double n_ref = static_cast<double>(counts_.total());
  const double n_all = n_ref + static_cast<double>(candidate.total());
  const double lambda = n_ref / n_all;  // q = lambda * p for items c lacks

  double js = 0.0;
  double touched_mass = 0.0;
  for (const auto& [item, c] : candidate.items()) {
    const double s = static_cast<double>(counts_.count(item));
    const double p = s / n_ref;
    const double q = (s + static_cast<double>(c)) / n_all;
    touched_mass += p;
    js += js_term(p, q);
  }
  const double rest = std::max(0.0, 1.0 - touched_mass);
  if (rest > 0.0) {
    const double k = 0.5 * (std::log2(2.0 / (1.0 + lambda)) + lambda * std::log2(2.0 * lambda / (1.0 + lambda)));
    js += rest * k;
  }
  return clamp_unit(js);
}

double instance_distance(const Counts& candidate, const Counts& reference) {
  if (candidate.empty()) throw Error(Errc::empty_features, "candidate has no features");
  if (reference.empty()) throw Error(Errc::missing_reference, "reference distribution is empty");
  Counts extended = reference;
  extended += candidate;
  return js_divergence(RuleDistribution(reference), RuleDistribution(extended));
}

std::string format_rule_inventory(const Counts& rules, bool with_counts) {
  std::string out;
  for (const auto& [rule, n] : rules.items()) {
    out += rule;
    if (with_counts) {
      out += '\t';
      out += std::to_string(n);
    }
    out += '\n';
  }
  return out;
}

}  // namespace sps
