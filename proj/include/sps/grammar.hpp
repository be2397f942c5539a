#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sps/random.hpp"
#include "sps/tree.hpp"

namespace sps {

/// Generative PCFG over n-ary productions, used by the offline generator
/// and to build synthetic treebanks. Symbols with productions expand
/// through them; symbols that only appear in the lexicon emit a word under
/// a POS node. Weights are normalized per left-hand side.
class Grammar {
 public:
  struct Production {
    std::string lhs;
    std::vector<std::string> rhs;
    double weight = 1.0;
  };
  struct Emission {
    std::string tag;
    std::string word;
    double weight = 1.0;
  };

  Grammar(std::map<std::string, double> start, std::vector<Production> productions, std::vector<Emission> lexicon);

  static Grammar from_json(const nlohmann::json& j);
  static Grammar load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Ancestral sample. Throws Errc::invalid_argument if the derivation
  /// exceeds `max_depth`.
  ParseTree sample(Rng& rng, std::size_t max_depth = 64) const;

  const std::vector<Production>& productions() const noexcept { return productions_; }
  const std::vector<Emission>& lexicon() const noexcept { return lexicon_; }

 private:
  Node expand(const std::string& symbol, Rng& rng, std::size_t depth, std::size_t max_depth) const;

  std::vector<std::pair<std::string, double>> start_;
  std::vector<Production> productions_;
  std::vector<Emission> lexicon_;
  std::map<std::string, std::vector<std::size_t>> by_lhs_;  // indices into productions_
  std::map<std::string, std::vector<std::size_t>> by_tag_;  // indices into lexicon_
};

/// Draws from weighted (item, weight) entries; weights need not be normalized.
std::size_t weighted_choice(const std::vector<double>& weights, Rng& rng);

}  // namespace sps
