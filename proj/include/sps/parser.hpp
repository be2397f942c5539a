#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sps/mapping.hpp"
#include "sps/tree.hpp"

namespace sps {

/// A parsed candidate sentence. `fallback` marks the flat tree returned when
/// the grammar has no derivation; such trees carry confidence 0.
struct PseudoTree {
  Sentence sentence;
  ParseTree tree;
  double confidence = 0.0;
  bool fallback = false;
};

class Parser {
 public:
  virtual ~Parser() = default;
  virtual PseudoTree parse(const Sentence& sentence) const = 0;
  virtual std::string backend_id() const = 0;
};

struct TrainConfig {
  double alpha = 0.01;               // additive smoothing over observed rule shapes
  std::uint64_t unk_threshold = 1;   // words seen this often or less feed UNK classes
  const LabelInventory* inventory = nullptr;
};

/// Anything that can turn a treebank into a Parser. A neural backend only
/// has to implement this and Parser.
class ParserBackend {
 public:
  virtual ~ParserBackend() = default;
  virtual std::unique_ptr<Parser> train(const std::vector<ParseTree>& treebank, const TrainConfig& config,
                                        std::uint64_t seed) const = 0;
  virtual std::string id() const = 0;
};

/// Right-binarized PCFG with CKY Viterbi decoding.
///
/// Intermediate symbols introduced by binarization start with '@' and bare
/// tokens under phrasal nodes are wrapped in a "#tok" preterminal; both are
/// removed again when a derivation is turned back into a tree. Every
/// left-hand side (phrasal or POS) owns one family whose rule and emission
/// probabilities sum to one. Unknown words are scored through "#UNK"
/// signature emissions estimated from rare training words.
class PcfgModel final : public Parser {
 public:
  static PcfgModel train(const std::vector<ParseTree>& treebank, const TrainConfig& config = {});

  static PcfgModel from_json(const nlohmann::json& j);
  static PcfgModel load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

  /// Viterbi tree; confidence is the geometric mean per-token derivation
  /// probability. Sentences without a derivation get a flat fallback tree.
  PseudoTree parse(const Sentence& sentence) const override;
  std::string backend_id() const override { return "pcfg"; }

  /// Multiplies every binary-rule probability by `factor`. Used to check that
  /// Viterbi decisions only depend on ratios; the result is no longer normalized.
  PcfgModel with_scaled_binary(double factor) const;
  PcfgModel with_scaled_roots(double factor) const;

  std::size_t symbol_count() const noexcept { return names_.size(); }
  std::size_t rule_count() const noexcept { return unary_.size() + binary_.size(); }

  /// Probability of `lhs -> rhs` in the binarized grammar (0 when absent).
  double rule_prob(const std::string& lhs, const std::vector<std::string>& rhs) const;
  double emission_prob(const std::string& tag, const std::string& word) const;
  double root_prob(const std::string& label) const;

  /// UNK class of a word; words never seen in training are emitted through it.
  static std::string signature(const std::string& word);

  friend bool operator==(const PcfgModel& a, const PcfgModel& b) { return a.to_json() == b.to_json(); }

 private:
  struct Unary {
    int lhs, child;
    double logp;
    friend bool operator==(const Unary&, const Unary&) = default;
  };
  struct Binary {
    int lhs, left, right;
    double logp;
    friend bool operator==(const Binary&, const Binary&) = default;
  };
  struct Emission {
    int tag;
    double logp;
    friend bool operator==(const Emission&, const Emission&) = default;
  };

  int intern(const std::string& name);
  int find(const std::string& name) const;
  void index();
  void validate() const;
  const std::vector<Emission>* emissions_for(const std::string& word) const;
  const std::vector<Emission>* unknown_emissions(const std::string& word) const;

  std::vector<std::string> names_;
  std::map<std::string, int> ids_;
  std::vector<Unary> unary_;    // sorted by rule string
  std::vector<Binary> binary_;  // sorted by rule string
  std::map<std::string, std::vector<Emission>> lexicon_;  // word or signature -> tags
  std::vector<std::pair<int, double>> roots_;              // (symbol, logp)
  int fallback_root_ = -1;
  int fallback_tag_ = -1;
  std::map<std::string, int> best_tag_;  // most frequent tag per known word
  std::map<std::string, std::uint64_t> word_counts_;
  double alpha_ = 0.01;
  std::uint64_t unk_threshold_ = 1;

  // derived indices (rebuilt by index())
  std::vector<std::vector<int>> binary_by_left_;
  std::vector<int> unary_order_;
};

class PcfgBackend final : public ParserBackend {
 public:
  std::unique_ptr<Parser> train(const std::vector<ParseTree>& treebank, const TrainConfig& config,
                                std::uint64_t seed) const override;
  std::string id() const override { return "pcfg"; }
};

/// Parses with a constituency parser and relabels its output through a
/// mapping table, followed by POS normalization. Confidence is the inner
/// parser's, so confidence-based selection is meaningless here; the
/// self-training driver refuses that combination.
class MappingParser final : public Parser {
 public:
  MappingParser(std::shared_ptr<const Parser> constituency, MappingTable table, LabelInventory inventory);
  PseudoTree parse(const Sentence& sentence) const override;
  std::string backend_id() const override { return "mapping+" + inner_->backend_id(); }

 private:
  std::shared_ptr<const Parser> inner_;
  MappingTable table_;
  LabelInventory inventory_;
};

}  // namespace sps
