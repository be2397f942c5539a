#pragma once

#include <string>
#include <vector>

#include "sps/random.hpp"
#include "sps/tree.hpp"

namespace sps::testkit {

/// Random valid tree: phrasal nodes drawn from `phrasal`, preterminals from
/// `pos`, tokens from a small pool so that repeats happen.
inline Node random_node(Rng& rng, const std::vector<std::string>& phrasal, const std::vector<std::string>& pos,
                        int depth) {
  static const std::vector<std::string> tokens = {"我", "看", "书", "的", "很", "好", "。", "，", "ab", "x1", "昨天"};
  const bool stop = depth <= 0 || uniform01(rng) < 0.35;
  if (stop) {
    if (uniform01(rng) < 0.15) return Node::leaf(tokens[uniform_index(rng, tokens.size())]);
    return Node::internal(pos[uniform_index(rng, pos.size())], {Node::leaf(tokens[uniform_index(rng, tokens.size())])});
  }
  const std::size_t k = 1 + uniform_index(rng, 4);
  std::vector<Node> kids;
  for (std::size_t i = 0; i < k; ++i) kids.push_back(random_node(rng, phrasal, pos, depth - 1));
  return Node::internal(phrasal[uniform_index(rng, phrasal.size())], std::move(kids));
}

inline ParseTree random_tree(Rng& rng, int depth = 4) {
  static const std::vector<std::string> phrasal = {"sps", "subject", "predicate", "object", "att", "adv", "comp", "ind"};
  static const std::vector<std::string> pos = {"n", "v", "a", "d", "u", "w", "t", "r"};
  std::vector<Node> kids;
  const std::size_t k = 1 + uniform_index(rng, 3);
  for (std::size_t i = 0; i < k; ++i) kids.push_back(random_node(rng, phrasal, pos, depth));
  return ParseTree(Node::internal("sps", std::move(kids)));
}

/// Like random_tree but POS labels may also sit above internal nodes.
inline ParseTree random_unnormalized_tree(Rng& rng, int depth = 4) {
  static const std::vector<std::string> mixed = {"sps", "subject", "adv", "att", "n", "t", "v", "w"};
  static const std::vector<std::string> pos = {"n", "v", "t", "w"};
  std::vector<Node> kids;
  const std::size_t k = 2 + uniform_index(rng, 2);
  for (std::size_t i = 0; i < k; ++i) kids.push_back(random_node(rng, mixed, pos, depth));
  return ParseTree(Node::internal("sps", std::move(kids)));
}

}  // namespace sps::testkit
