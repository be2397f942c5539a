#include "sps/parser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "sps/io.hpp"

namespace sps {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr const char* kTokTag = "#tok";
constexpr const char* kModelFormat = "sps-pcfg";
constexpr int kModelVersion = 1;

bool is_virtual(const std::string& label) { return !label.empty() && (label[0] == '@' || label[0] == '#'); }

std::string rule_key(const std::string& lhs, const std::vector<std::string>& rhs) {
  std::string k = lhs + " ->";
  for (const auto& r : rhs) k += " " + r;
  return k;
}

struct RawCounts {
  std::map<std::string, std::map<std::vector<std::string>, std::uint64_t>> rules;  // lhs -> rhs -> n
  std::map<std::string, std::map<std::string, std::uint64_t>> emissions;           // tag -> word -> n
  std::map<std::string, std::uint64_t> roots;
  std::map<std::string, std::uint64_t> word_totals;
};

void check_label(const std::string& label) {
  if (is_virtual(label))
    throw Error(Errc::invalid_argument, "label '" + label + "' collides with internal grammar symbols");
}

void count_node(const Node& n, RawCounts& rc) {
  if (n.is_preterminal()) {
    check_label(n.label);
    ++rc.emissions[n.label][n.children.front().token];
    ++rc.word_totals[n.children.front().token];
    return;
  }
  check_label(n.label);
  std::vector<std::string> kids;
  for (const auto& c : n.children) {
    if (c.is_leaf()) {
      kids.emplace_back(kTokTag);
      ++rc.emissions[kTokTag][c.token];
      ++rc.word_totals[c.token];
    } else {
      kids.push_back(c.label);
      count_node(c, rc);
    }
  }
  // Right binarization: A -> X1 @A|X2_..._Xk, @A|X2_..._Xk -> X2 @A|X3_..._Xk, ...
  std::string lhs = n.label;
  std::size_t i = 0;
  while (kids.size() - i > 2) {
    std::string rest = "@" + n.label + "|";
    for (std::size_t k = i + 1; k < kids.size(); ++k) rest += (k > i + 1 ? "_" : "") + kids[k];
    ++rc.rules[lhs][{kids[i], rest}];
    lhs = rest;
    ++i;
  }
  std::vector<std::string> tail(kids.begin() + static_cast<std::ptrdiff_t>(i), kids.end());
  ++rc.rules[lhs][tail];
}

bool all_of_class(const std::string& w, bool (*pred)(unsigned char)) {
  return std::all_of(w.begin(), w.end(), [&](char c) { return pred(static_cast<unsigned char>(c)); });
}

// Flattens virtual nodes back into their parents.
std::vector<Node> debinarize(Node n) {
  if (n.is_leaf()) return {std::move(n)};
  std::vector<Node> kids;
  for (auto& c : n.children) {
    auto sub = debinarize(std::move(c));
    for (auto& s : sub) kids.push_back(std::move(s));
  }
  if (n.label == kTokTag) return kids;
  if (!n.label.empty() && n.label[0] == '@') return kids;
  return {Node::internal(std::move(n.label), std::move(kids))};
}

}  // namespace

std::string PcfgModel::signature(const std::string& word) {
  if (std::any_of(word.begin(), word.end(), [](char c) { return c >= '0' && c <= '9'; })) return "#UNK-NUM";
  if (all_of_class(word, [](unsigned char c) { return std::ispunct(c) != 0; })) return "#UNK-PUNCT";
  if (all_of_class(word, [](unsigned char c) { return std::isalpha(c) != 0; })) return "#UNK-LAT";
  return "#UNK";
}

int PcfgModel::intern(const std::string& name) {
  auto [it, inserted] = ids_.emplace(name, static_cast<int>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

int PcfgModel::find(const std::string& name) const {
  auto it = ids_.find(name);
  return it == ids_.end() ? -1 : it->second;
}

PcfgModel PcfgModel::train(const std::vector<ParseTree>& treebank, const TrainConfig& config) {
  if (treebank.empty()) throw Error(Errc::empty_treebank, "cannot train on an empty treebank");
  if (!(config.alpha > 0.0)) throw Error(Errc::config, "smoothing alpha must be positive");

  RawCounts rc;
  for (std::size_t t = 0; t < treebank.size(); ++t) {
    try {
      if (config.inventory) config.inventory->validate(treebank[t]);
      ++rc.roots[treebank[t].root().label];
      count_node(treebank[t].root(), rc);
    } catch (const Error& e) {
      throw Error(e.code(), "training tree " + std::to_string(t) + ": " + e.what());
    }
  }
  // Rare words also count towards their signature, which is how unseen
  // words get scored at parse time.
  for (auto& [tag, words] : rc.emissions) {
    std::map<std::string, std::uint64_t> extra;
    for (const auto& [w, n] : words)
      if (rc.word_totals[w] <= config.unk_threshold) extra[signature(w)] += n;
    for (const auto& [sig, n] : extra) words[sig] += n;
  }

  PcfgModel m;
  m.alpha_ = config.alpha;
  m.unk_threshold_ = config.unk_threshold;

  // Family normalization: one denominator per left-hand side covering its
  // rules and its emissions.
  std::map<std::string, std::pair<std::uint64_t, std::size_t>> family;  // lhs -> (count, events)
  for (const auto& [lhs, rhss] : rc.rules)
    for (const auto& [rhs, n] : rhss) {
      family[lhs].first += n;
      ++family[lhs].second;
    }
  for (const auto& [tag, words] : rc.emissions)
    for (const auto& [w, n] : words) {
      family[tag].first += n;
      ++family[tag].second;
    }
  auto prob = [&](const std::string& lhs, std::uint64_t n) {
    const auto& [total, events] = family.at(lhs);
    return (static_cast<double>(n) + config.alpha) /
           (static_cast<double>(total) + config.alpha * static_cast<double>(events));
  };

  std::vector<std::tuple<std::string, std::string, std::vector<std::string>, double>> rules;
  for (const auto& [lhs, rhss] : rc.rules)
    for (const auto& [rhs, n] : rhss) rules.emplace_back(rule_key(lhs, rhs), lhs, rhs, prob(lhs, n));
  std::sort(rules.begin(), rules.end());
  for (const auto& [key, lhs, rhs, p] : rules) {
    const int a = m.intern(lhs);
    if (rhs.size() == 1)
      m.unary_.push_back({a, m.intern(rhs[0]), std::log(p)});
    else
      m.binary_.push_back({a, m.intern(rhs[0]), m.intern(rhs[1]), std::log(p)});
  }
  for (const auto& [tag, words] : rc.emissions) {
    const int t = m.intern(tag);
    for (const auto& [w, n] : words) m.lexicon_[w].push_back({t, std::log(prob(tag, n))});
  }

  std::uint64_t root_total = 0;
  for (const auto& [label, n] : rc.roots) root_total += n;
  const double root_den = static_cast<double>(root_total) + config.alpha * static_cast<double>(rc.roots.size());
  std::uint64_t best_root_n = 0;
  for (const auto& [label, n] : rc.roots) {
    const int r = m.intern(label);
    m.roots_.emplace_back(r, std::log((static_cast<double>(n) + config.alpha) / root_den));
    if (n > best_root_n) {
      best_root_n = n;
      m.fallback_root_ = r;
    }
  }

  std::map<std::string, std::uint64_t> tag_totals;
  std::map<std::string, std::pair<std::uint64_t, std::string>> word_best;
  for (const auto& [tag, words] : rc.emissions) {
    if (tag == kTokTag) continue;
    for (const auto& [w, n] : words) {
      if (w.rfind("#UNK", 0) == 0) continue;
      tag_totals[tag] += n;
      auto& wb = word_best[w];
      if (n > wb.first) wb = {n, tag};
    }
  }
  std::uint64_t best_tag_n = 0;
  for (const auto& [tag, n] : tag_totals)
    if (n > best_tag_n) {
      best_tag_n = n;
      m.fallback_tag_ = m.find(tag);
    }
  for (const auto& [w, nb] : word_best) m.best_tag_[w] = m.find(nb.second);
  for (const auto& [w, n] : rc.word_totals) m.word_counts_[w] = n;

  m.index();
  return m;
}

void PcfgModel::index() {
  binary_by_left_.assign(names_.size(), {});
  for (std::size_t r = 0; r < binary_.size(); ++r) binary_by_left_[binary_[r].left].push_back(static_cast<int>(r));
  unary_order_.resize(unary_.size());
  for (std::size_t r = 0; r < unary_.size(); ++r) unary_order_[r] = static_cast<int>(r);
}

const std::vector<PcfgModel::Emission>* PcfgModel::emissions_for(const std::string& word) const {
  if (auto it = lexicon_.find(word); it != lexicon_.end()) return &it->second;
  return unknown_emissions(word);
}

const std::vector<PcfgModel::Emission>* PcfgModel::unknown_emissions(const std::string& word) const {
  if (auto it = lexicon_.find(signature(word)); it != lexicon_.end()) return &it->second;
  if (auto it = lexicon_.find("#UNK"); it != lexicon_.end()) return &it->second;
  // Last resort: the signature class with the most emitting tags.
  const std::vector<Emission>* best = nullptr;
  for (const auto& [w, em] : lexicon_)
    if (w.rfind("#UNK", 0) == 0 && (!best || em.size() > best->size())) best = &em;
  return best;
}

PseudoTree PcfgModel::parse(const Sentence& sentence) const {
  validate_sentence(sentence);
  const std::size_t n = sentence.size();
  const std::size_t S = names_.size();
  const std::size_t W = n + 1;

  struct Back {
    std::int8_t kind = 0;  // 0 none, 1 lexical, 2 unary, 3 binary
    int rule = -1;
    int split = -1;
  };
  std::vector<double> score(W * W * S, kNegInf);
  std::vector<Back> back(W * W * S);
  auto at = [&](std::size_t i, std::size_t j, std::size_t a) { return (i * W + j) * S + a; };

  auto unary_closure = [&](std::size_t i, std::size_t j) {
    for (std::size_t round = 0; round < S; ++round) {
      bool changed = false;
      for (int r : unary_order_) {
        const Unary& u = unary_[r];
        const double child = score[at(i, j, u.child)];
        if (child == kNegInf) continue;
        const double s = child + u.logp;
        if (s > score[at(i, j, u.lhs)]) {
          score[at(i, j, u.lhs)] = s;
          back[at(i, j, u.lhs)] = Back{2, r, -1};
          changed = true;
        }
      }
      if (!changed) break;
    }
  };

  for (std::size_t i = 0; i < n; ++i) {
    const auto* em = emissions_for(sentence[i]);
    if (em)
      for (const auto& e : *em) {
        score[at(i, i + 1, e.tag)] = e.logp;
        back[at(i, i + 1, e.tag)] = Back{1, -1, -1};
      }
    // A known word may still take a tag it was never seen with, at its
    // signature's rate discounted by how often the word was seen.
    if (auto wc = word_counts_.find(sentence[i]); wc != word_counts_.end()) {
      const auto* sig = unknown_emissions(sentence[i]);
      const double discount = std::log(alpha_ / (alpha_ + static_cast<double>(wc->second)));
      if (sig)
        for (const auto& e : *sig)
          if (score[at(i, i + 1, e.tag)] == kNegInf) {
            score[at(i, i + 1, e.tag)] = e.logp + discount;
            back[at(i, i + 1, e.tag)] = Back{1, -1, -1};
          }
    }
    unary_closure(i, i + 1);
  }

  std::vector<int> live;
  for (std::size_t len = 2; len <= n; ++len) {
    for (std::size_t i = 0; i + len <= n; ++i) {
      const std::size_t j = i + len;
      for (std::size_t k = i + 1; k < j; ++k) {
        live.clear();
        for (std::size_t b = 0; b < S; ++b)
          if (score[at(i, k, b)] != kNegInf) live.push_back(static_cast<int>(b));
        for (int b : live) {
          const double left = score[at(i, k, b)];
          for (int r : binary_by_left_[b]) {
            const Binary& rule = binary_[r];
            const double right = score[at(k, j, rule.right)];
            if (right == kNegInf) continue;
            const double s = left + right + rule.logp;
            double& cur = score[at(i, j, rule.lhs)];
            Back& bp = back[at(i, j, rule.lhs)];
            // Exact ties go to the lexicographically smaller rule, then the
            // leftmost split.
            if (s > cur || (s == cur && bp.kind == 3 &&
                            (r < bp.rule || (r == bp.rule && static_cast<int>(k) < bp.split)))) {
              cur = s;
              bp = Back{3, r, static_cast<int>(k)};
            }
          }
        }
      }
      unary_closure(i, j);
    }
  }

  int best_root = -1;
  double best = kNegInf;
  for (const auto& [r, logp] : roots_) {
    const double s = score[at(0, n, r)];
    if (s == kNegInf) continue;
    if (s + logp > best) {
      best = s + logp;
      best_root = r;
    }
  }

  if (best_root < 0) {
    std::vector<Node> kids;
    for (const auto& w : sentence) {
      auto it = best_tag_.find(w);
      const int tag = it != best_tag_.end() ? it->second : fallback_tag_;
      kids.push_back(Node::internal(names_[tag], {Node::leaf(w)}));
    }
    return PseudoTree{sentence, ParseTree(Node::internal(names_[fallback_root_], std::move(kids))), 0.0, true};
  }

  auto build = [&](auto&& self, std::size_t i, std::size_t j, int a) -> Node {
    const Back& bp = back[at(i, j, a)];
    switch (bp.kind) {
      case 1: return Node::internal(names_[a], {Node::leaf(sentence[i])});
      case 2: return Node::internal(names_[a], {self(self, i, j, unary_[bp.rule].child)});
      case 3: {
        const Binary& r = binary_[bp.rule];
        const auto k = static_cast<std::size_t>(bp.split);
        return Node::internal(names_[a], {self(self, i, k, r.left), self(self, k, j, r.right)});
      }
      default: throw Error(Errc::invalid_model, "broken back-pointer in CKY chart");
    }
  };
  auto nodes = debinarize(build(build, 0, n, best_root));
  const double confidence = std::exp(best / static_cast<double>(n));
  return PseudoTree{sentence, ParseTree(std::move(nodes.front())), std::clamp(confidence, 0.0, 1.0), false};
}

// ---------------------------------------------------------------------------
// Persistence

nlohmann::json PcfgModel::to_json() const {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["alpha"] = alpha_;
  j["unk_threshold"] = unk_threshold_;
  j["roots"] = nlohmann::json::array();
  for (const auto& [r, logp] : roots_) j["roots"].push_back({{"label", names_[r]}, {"logp", logp}});
  j["rules"] = nlohmann::json::array();
  for (const auto& u : unary_)
    j["rules"].push_back({{"lhs", names_[u.lhs]}, {"rhs", {names_[u.child]}}, {"logp", u.logp}});
  for (const auto& b : binary_)
    j["rules"].push_back({{"lhs", names_[b.lhs]}, {"rhs", {names_[b.left], names_[b.right]}}, {"logp", b.logp}});
  j["lexicon"] = nlohmann::json::array();
  for (const auto& [w, ems] : lexicon_)
    for (const auto& e : ems) j["lexicon"].push_back({{"tag", names_[e.tag]}, {"word", w}, {"logp", e.logp}});
  j["fallback_root"] = names_[fallback_root_];
  j["fallback_tag"] = fallback_tag_ >= 0 ? nlohmann::json(names_[fallback_tag_]) : nlohmann::json(nullptr);
  j["best_tags"] = nlohmann::json::object();
  for (const auto& [w, t] : best_tag_) j["best_tags"][w] = names_[t];
  j["word_counts"] = word_counts_;
  return j;
}

PcfgModel PcfgModel::from_json(const nlohmann::json& j) {
  PcfgModel m;
  try {
    if (j.at("format").get<std::string>() != kModelFormat)
      throw Error(Errc::invalid_model, "not an sps-pcfg model");
    if (j.at("version").get<int>() != kModelVersion)
      throw Error(Errc::invalid_model, "unsupported model version " + j.at("version").dump());
    m.alpha_ = j.at("alpha").get<double>();
    m.unk_threshold_ = j.at("unk_threshold").get<std::uint64_t>();

    // Interning order must match train() so that a reloaded model compares
    // equal: rules in sorted order, then emission tags, then roots.
    std::vector<std::tuple<std::string, std::string, std::vector<std::string>, double>> rules;
    for (const auto& jr : j.at("rules")) {
      auto lhs = jr.at("lhs").get<std::string>();
      auto rhs = jr.at("rhs").get<std::vector<std::string>>();
      if (rhs.empty() || rhs.size() > 2) throw Error(Errc::invalid_model, "rule with " + std::to_string(rhs.size()) + " children");
      rules.emplace_back(rule_key(lhs, rhs), lhs, rhs, jr.at("logp").get<double>());
    }
    std::sort(rules.begin(), rules.end());
    for (const auto& [key, lhs, rhs, logp] : rules) {
      const int a = m.intern(lhs);
      if (rhs.size() == 1)
        m.unary_.push_back({a, m.intern(rhs[0]), logp});
      else
        m.binary_.push_back({a, m.intern(rhs[0]), m.intern(rhs[1]), logp});
    }
    std::map<std::string, std::vector<std::pair<std::string, double>>> by_tag;
    for (const auto& je : j.at("lexicon"))
      by_tag[je.at("tag").get<std::string>()].emplace_back(je.at("word").get<std::string>(), je.at("logp").get<double>());
    for (const auto& [tag, words] : by_tag) {
      const int t = m.intern(tag);
      for (const auto& [w, logp] : words) m.lexicon_[w].push_back({t, logp});
    }
    for (auto& [w, ems] : m.lexicon_)
      std::sort(ems.begin(), ems.end(), [&](const Emission& a, const Emission& b) { return m.names_[a.tag] < m.names_[b.tag]; });
    std::vector<std::pair<std::string, double>> roots;
    for (const auto& jr : j.at("roots")) roots.emplace_back(jr.at("label").get<std::string>(), jr.at("logp").get<double>());
    std::sort(roots.begin(), roots.end());
    for (const auto& [label, logp] : roots) m.roots_.emplace_back(m.intern(label), logp);
    m.fallback_root_ = m.find(j.at("fallback_root").get<std::string>());
    if (!j.at("fallback_tag").is_null()) m.fallback_tag_ = m.find(j.at("fallback_tag").get<std::string>());
    for (const auto& [w, t] : j.at("best_tags").items()) m.best_tag_[w] = m.find(t.get<std::string>());
    m.word_counts_ = j.at("word_counts").get<std::map<std::string, std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_model, std::string("model file: ") + e.what());
  }
  m.index();
  m.validate();
  return m;
}

void PcfgModel::validate() const {
  std::vector<double> mass(names_.size(), 0.0);
  std::vector<bool> has(names_.size(), false);
  auto add = [&](int lhs, double logp) {
    if (!std::isfinite(logp) || logp > 1e-12) throw Error(Errc::invalid_model, "rule probability outside (0, 1]");
    mass[lhs] += std::exp(logp);
    has[lhs] = true;
  };
  for (const auto& u : unary_) add(u.lhs, u.logp);
  for (const auto& b : binary_) add(b.lhs, b.logp);
  for (const auto& [w, ems] : lexicon_)
    for (const auto& e : ems) add(e.tag, e.logp);
  for (std::size_t a = 0; a < names_.size(); ++a)
    if (has[a] && std::abs(mass[a] - 1.0) > 1e-6)
      throw Error(Errc::invalid_model, "probabilities of '" + names_[a] + "' sum to " + std::to_string(mass[a]));
  double root_mass = 0.0;
  for (const auto& [r, logp] : roots_) root_mass += std::exp(logp);
  if (roots_.empty() || std::abs(root_mass - 1.0) > 1e-6)
    throw Error(Errc::invalid_model, "root probabilities sum to " + std::to_string(root_mass));
  if (fallback_root_ < 0) throw Error(Errc::invalid_model, "model has no fallback root");
}

PcfgModel PcfgModel::load(const std::filesystem::path& path) {
  try {
    return from_json(read_json(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void PcfgModel::save(const std::filesystem::path& path) const { write_json_atomic(path, to_json()); }

PcfgModel PcfgModel::with_scaled_binary(double factor) const {
  PcfgModel m = *this;
  for (auto& b : m.binary_) b.logp += std::log(factor);
  return m;
}

PcfgModel PcfgModel::with_scaled_roots(double factor) const {
  PcfgModel m = *this;
  for (auto& r : m.roots_) r.second += std::log(factor);
  return m;
}

double PcfgModel::rule_prob(const std::string& lhs, const std::vector<std::string>& rhs) const {
  const int a = find(lhs);
  if (a < 0) return 0.0;
  if (rhs.size() == 1) {
    const int c = find(rhs[0]);
    for (const auto& u : unary_)
      if (u.lhs == a && u.child == c) return std::exp(u.logp);
  } else if (rhs.size() == 2) {
    const int l = find(rhs[0]), r = find(rhs[1]);
    for (const auto& b : binary_)
      if (b.lhs == a && b.left == l && b.right == r) return std::exp(b.logp);
  }
  return 0.0;
}

double PcfgModel::emission_prob(const std::string& tag, const std::string& word) const {
  const int t = find(tag);
  auto it = lexicon_.find(word);
  if (t < 0 || it == lexicon_.end()) return 0.0;
  for (const auto& e : it->second)
    if (e.tag == t) return std::exp(e.logp);
  return 0.0;
}

double PcfgModel::root_prob(const std::string& label) const {
  const int r = find(label);
  for (const auto& [id, logp] : roots_)
    if (id == r) return std::exp(logp);
  return 0.0;
}

std::unique_ptr<Parser> PcfgBackend::train(const std::vector<ParseTree>& treebank, const TrainConfig& config,
                                           std::uint64_t /*seed*/) const {
  return std::make_unique<PcfgModel>(PcfgModel::train(treebank, config));
}

// ---------------------------------------------------------------------------

MappingParser::MappingParser(std::shared_ptr<const Parser> constituency, MappingTable table, LabelInventory inventory)
    : inner_(std::move(constituency)), table_(std::move(table)), inventory_(std::move(inventory)) {
  if (!inner_) throw Error(Errc::invalid_argument, "mapping parser needs a constituency parser");
}

PseudoTree MappingParser::parse(const Sentence& sentence) const {
  PseudoTree pt = inner_->parse(sentence);
  ParseTree sps_tree = normalize_pos_nodes(convert(pt.tree, table_), inventory_);
  return PseudoTree{pt.sentence, std::move(sps_tree), pt.confidence, pt.fallback};
}

}  // namespace sps
