#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sps/tree.hpp"

namespace sps {

/// Target-domain word list. Stored sorted so that membership and
/// strict-prefix queries are both O(log n) binary searches.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::vector<std::string> words);

  static Lexicon load(const std::filesystem::path& path);

  bool contains(std::string_view word) const;
  /// True when some lexicon word is strictly longer than `s` and starts with it.
  bool is_strict_prefix(std::string_view s) const;

  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }

 private:
  std::vector<std::string> words_;
};

/// Coarse word -> finest-granularity parts. The parts of an entry must
/// concatenate back to the key.
class SplitTable {
 public:
  SplitTable() = default;
  explicit SplitTable(std::map<std::string, std::vector<std::string>> entries);

  static SplitTable load(const std::filesystem::path& path);

  /// Recursively expands `word` through the table; words without an entry
  /// come back as a single part.
  std::vector<std::string> finest(const std::string& word) const;
  bool contains(const std::string& word) const { return entries_.count(word) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

struct Misalignment {
  std::size_t tree_index = 0;
  std::size_t leaf_index = 0;
  std::string surface;
  std::vector<std::string> before;  // source tokens of the region, when known
  std::vector<std::string> after;   // tokens left in the output tree

  friend bool operator==(const Misalignment&, const Misalignment&) = default;
};

struct UnmatchedLeaf {
  std::size_t tree_index = 0;
  std::string leaf;

  friend bool operator==(const UnmatchedLeaf&, const UnmatchedLeaf&) = default;
};

/// A committed merge whose head was itself a lexicon word, so a word-first
/// policy could have stopped earlier.
struct FlaggedMerge {
  std::size_t tree_index = 0;
  std::size_t leaf_index = 0;  // in the merge-pass output
  std::vector<std::string> pieces;

  friend bool operator==(const FlaggedMerge&, const FlaggedMerge&) = default;
};

/// Where the prefix-first and word-first policies disagree.
struct Ambiguity {
  std::size_t tree_index = 0;
  std::size_t leaf_index = 0;  // in the resolved output
  std::vector<std::string> pieces;
  std::vector<std::string> first_pass;
  std::vector<std::string> second_pass;
  std::vector<std::string> resolved;

  friend bool operator==(const Ambiguity&, const Ambiguity&) = default;
};

struct TransferReport {
  std::size_t merged = 0;
  std::size_t split = 0;
  std::vector<Misalignment> misaligned;
  std::vector<UnmatchedLeaf> unmatched_logged;
  std::vector<FlaggedMerge> flagged;
  std::vector<Ambiguity> ambiguous;

  TransferReport& operator+=(const TransferReport& other);
  nlohmann::json to_json() const;
};

struct SegmentationOptions {
  /// Maximum number of adjacent leaves concatenated in one merge attempt.
  std::size_t lookahead = 3;
};

/// Replaces every leaf whose token has a split-table entry by one sibling
/// per finest part, each under a copy of the leaf's POS node.
ParseTree split_finest(const ParseTree& tree, const SplitTable& table, TransferReport* report = nullptr);

struct SegmentationResult {
  ParseTree tree;
  TransferReport report;
};

/// Prefix-first merge scan over same-parent leaves, repeated until a pass
/// makes no edits. Misalignment and unmatched entries describe the final pass.
SegmentationResult merge_pass(const ParseTree& tree, const Lexicon& lexicon,
                              const SegmentationOptions& opts = {}, std::size_t tree_index = 0);

/// Re-examines the merges flagged by merge_pass under word-first
/// precedence. Each flagged leaf and its right neighbour form a region;
/// the region is re-segmented into the fewest lexicon words (ties: longer
/// leftmost words), disagreements land in `ambiguous`, and regions with no
/// lexicon-consistent segmentation stay as they were and land in `misaligned`.
SegmentationResult resolve_ambiguous(const ParseTree& merged, const Lexicon& lexicon,
                                     const TransferReport& first_pass, const SegmentationOptions& opts = {},
                                     std::size_t tree_index = 0);

/// split_finest, merge_pass and resolve_ambiguous in sequence. The report's
/// merged/split counts and crossing misalignments are computed by aligning
/// the input tokens with the output tokens: a region of several input
/// tokens becoming one output token is a merge, one input token becoming
/// several is a split, and anything else is a misalignment.
SegmentationResult transfer(const ParseTree& tree, const SplitTable& table, const Lexicon& lexicon,
                            const SegmentationOptions& opts = {}, std::size_t tree_index = 0);

struct CorpusTransfer {
  std::vector<ParseTree> trees;
  TransferReport report;
};

CorpusTransfer transfer_corpus(const std::vector<ParseTree>& trees, const SplitTable& table,
                               const Lexicon& lexicon, const SegmentationOptions& opts = {},
                               unsigned jobs = 1);

/// Fewest-word segmentation of `pieces` into lexicon words, preferring
/// longer leftmost words on ties. Returns the number of pieces in each word,
/// or an empty vector when no segmentation exists.
std::vector<std::size_t> min_word_segmentation(const std::vector<std::string>& pieces,
                                               const Lexicon& lexicon);

/// UTF-8 code points of `text` (invalid bytes are passed through singly).
std::vector<std::string> utf8_chars(std::string_view text);

/// Forward maximum matching over code points, used to tokenize generated
/// text that arrives without spaces.
Sentence max_match_tokenize(std::string_view text, const Lexicon& lexicon, std::size_t max_word_chars = 8);

}  // namespace sps
