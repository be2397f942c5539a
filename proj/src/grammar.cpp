#include "sps/grammar.hpp"

#include "sps/io.hpp"

namespace sps {

std::size_t weighted_choice(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw Error(Errc::invalid_argument, "weighted choice over zero total weight");
  double x = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (x < weights[i]) return i;
    x -= weights[i];
  }
  // Rounding can leave x just past the last bucket.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return 0;
}

Grammar::Grammar(std::map<std::string, double> start, std::vector<Production> productions,
                 std::vector<Emission> lexicon)
    : start_(start.begin(), start.end()), productions_(std::move(productions)), lexicon_(std::move(lexicon)) {
  if (start_.empty()) throw Error(Errc::config, "grammar has no start symbols");
  for (std::size_t i = 0; i < productions_.size(); ++i) {
    const auto& p = productions_[i];
    if (p.rhs.empty() || !(p.weight > 0.0))
      throw Error(Errc::config, "grammar production of '" + p.lhs + "' needs children and a positive weight");
    by_lhs_[p.lhs].push_back(i);
  }
  for (std::size_t i = 0; i < lexicon_.size(); ++i) {
    const auto& e = lexicon_[i];
    if (!valid_token(e.word) || !(e.weight > 0.0))
      throw Error(Errc::config, "grammar emission '" + e.tag + " -> " + e.word + "' is invalid");
    by_tag_[e.tag].push_back(i);
  }
  auto check_symbol = [&](const std::string& s) {
    if (!by_lhs_.count(s) && !by_tag_.count(s)) throw Error(Errc::config, "grammar symbol '" + s + "' cannot expand");
  };
  for (const auto& [s, w] : start_) check_symbol(s);
  for (const auto& p : productions_)
    for (const auto& c : p.rhs) check_symbol(c);
}

Grammar Grammar::from_json(const nlohmann::json& j) {
  try {
    std::map<std::string, double> start = j.at("start").get<std::map<std::string, double>>();
    std::vector<Production> prods;
    for (const auto& jp : j.at("rules"))
      prods.push_back({jp.at("lhs").get<std::string>(), jp.at("rhs").get<std::vector<std::string>>(),
                       jp.value("weight", 1.0)});
    std::vector<Emission> lex;
    for (const auto& je : j.at("lexicon"))
      lex.push_back({je.at("tag").get<std::string>(), je.at("word").get<std::string>(), je.value("weight", 1.0)});
    return Grammar(std::move(start), std::move(prods), std::move(lex));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, std::string("grammar: ") + e.what());
  }
}

Grammar Grammar::load(const std::filesystem::path& path) {
  try {
    return from_json(read_json(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

nlohmann::json Grammar::to_json() const {
  nlohmann::json j;
  j["start"] = nlohmann::json::object();
  for (const auto& [s, w] : start_) j["start"][s] = w;
  j["rules"] = nlohmann::json::array();
  for (const auto& p : productions_) j["rules"].push_back({{"lhs", p.lhs}, {"rhs", p.rhs}, {"weight", p.weight}});
  j["lexicon"] = nlohmann::json::array();
  for (const auto& e : lexicon_) j["lexicon"].push_back({{"tag", e.tag}, {"word", e.word}, {"weight", e.weight}});
  return j;
}

Node Grammar::expand(const std::string& symbol, Rng& rng, std::size_t depth, std::size_t max_depth) const {
  if (depth > max_depth) throw Error(Errc::invalid_argument, "grammar derivation exceeded depth " + std::to_string(max_depth));
  if (auto it = by_lhs_.find(symbol); it != by_lhs_.end()) {
    std::vector<double> w;
    for (std::size_t i : it->second) w.push_back(productions_[i].weight);
    const auto& p = productions_[it->second[weighted_choice(w, rng)]];
    std::vector<Node> kids;
    for (const auto& c : p.rhs) kids.push_back(expand(c, rng, depth + 1, max_depth));
    return Node::internal(symbol, std::move(kids));
  }
  const auto& idx = by_tag_.at(symbol);
  std::vector<double> w;
  for (std::size_t i : idx) w.push_back(lexicon_[i].weight);
  return Node::internal(symbol, {Node::leaf(lexicon_[idx[weighted_choice(w, rng)]].word)});
}

ParseTree Grammar::sample(Rng& rng, std::size_t max_depth) const {
  std::vector<double> w;
  for (const auto& [s, weight] : start_) w.push_back(weight);
  return ParseTree(expand(start_[weighted_choice(w, rng)].first, rng, 0, max_depth));
}

}  // namespace sps
