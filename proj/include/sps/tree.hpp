#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sps/error.hpp"

namespace sps {

/// A node of a labeled ordered tree. Leaves carry a token and no label;
/// internal nodes carry a label and at least one child.
struct Node {
  std::string label;
  std::string token;
  std::vector<Node> children;

  static Node leaf(std::string token);
  static Node internal(std::string label, std::vector<Node> children);

  bool is_leaf() const noexcept { return children.empty(); }

  // A POS node: exactly one child, and that child is a token.
  bool is_preterminal() const noexcept {
    return children.size() == 1 && children.front().is_leaf();
  }

  friend bool operator==(const Node&, const Node&) = default;
};

/// Immutable parse tree. Construction validates the structural invariants
/// (internal nodes labeled and non-empty, tokens non-empty and free of
/// whitespace and brackets).
class ParseTree {
 public:
  explicit ParseTree(Node root);

  const Node& root() const noexcept { return root_; }
  std::vector<std::string> tokens() const;
  std::size_t size() const;  // number of leaves

  friend bool operator==(const ParseTree&, const ParseTree&) = default;

 private:
  Node root_;
};

using Sentence = std::vector<std::string>;

/// Throws Errc::invalid_argument for an empty sentence or an empty token.
void validate_sentence(const Sentence& sentence);
std::string join_tokens(const Sentence& sentence, std::string_view sep = " ");

bool valid_token(std::string_view token) noexcept;

/// Partition of the label space into SPS constituent labels and POS labels.
class LabelInventory {
 public:
  LabelInventory() = default;
  LabelInventory(std::set<std::string> sps_labels, std::set<std::string> pos_labels);

  static LabelInventory from_json(const nlohmann::json& j);
  static LabelInventory load(const std::filesystem::path& path);
  static LabelInventory default_inventory();
  nlohmann::json to_json() const;

  bool is_sps(std::string_view label) const;
  bool is_pos(std::string_view label) const;
  bool contains(std::string_view label) const { return is_sps(label) || is_pos(label); }

  const std::set<std::string, std::less<>>& sps_labels() const noexcept { return sps_; }
  const std::set<std::string, std::less<>>& pos_labels() const noexcept { return pos_; }

  /// Throws Errc::unknown_label naming the first label outside the inventory.
  void validate(const ParseTree& tree) const;

 private:
  std::set<std::string, std::less<>> sps_;
  std::set<std::string, std::less<>> pos_;
};

/// Parses one Penn-style bracketed tree, e.g. "(adv (t 昨天) (w ，))".
/// An unlabeled outer wrapper around a single tree, "( (IP ...) )", is removed.
/// When `inventory` is given every label is checked against it.
ParseTree parse_bracketed(std::string_view text, const LabelInventory* inventory = nullptr);

/// Canonical single-spaced bracketing, the inverse of parse_bracketed.
std::string serialize(const ParseTree& tree);

/// Deletes POS-labeled internal nodes that dominate other internal nodes,
/// splicing their children into the parent, bottom-up until fixpoint.
ParseTree normalize_pos_nodes(const ParseTree& tree, const LabelInventory& inventory);

/// One tree per line, blank lines skipped. Errors carry the 1-based line
/// number and the file name in the message.
std::vector<ParseTree> read_treebank(const std::filesystem::path& path,
                                     const LabelInventory* inventory = nullptr);
std::vector<ParseTree> parse_treebank(std::string_view text,
                                      const LabelInventory* inventory = nullptr);
void write_treebank(const std::filesystem::path& path, const std::vector<ParseTree>& trees);

/// One whitespace-tokenized sentence per line, blank lines skipped.
std::vector<Sentence> read_sentences(const std::filesystem::path& path);
void write_sentences(const std::filesystem::path& path, const std::vector<Sentence>& sentences);

}  // namespace sps
