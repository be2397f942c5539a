#include "sps/tree.hpp"

#include <algorithm>

#include "sps/io.hpp"

namespace sps {

Node Node::leaf(std::string token) {
  Node n;
  n.token = std::move(token);
  return n;
}

Node Node::internal(std::string label, std::vector<Node> children) {
  Node n;
  n.label = std::move(label);
  n.children = std::move(children);
  return n;
}

bool valid_token(std::string_view token) noexcept {
  if (token.empty()) return false;
  for (char c : token) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f' || c == '(' ||
        c == ')')
      return false;
  }
  return true;
}

namespace {

void check_node(const Node& n) {
  if (n.is_leaf()) {
    if (!n.label.empty())
      throw Error(Errc::empty_node, "internal node '" + n.label + "' has no children");
    if (!valid_token(n.token))
      throw Error(Errc::malformed, "invalid token '" + n.token + "'");
    return;
  }
  if (!valid_token(n.label)) throw Error(Errc::empty_node, "internal node without a valid label");
  if (!n.token.empty()) throw Error(Errc::malformed, "internal node '" + n.label + "' carries a token");
  for (const Node& c : n.children) check_node(c);
}

void collect_tokens(const Node& n, std::vector<std::string>& out) {
  if (n.is_leaf()) {
    out.push_back(n.token);
    return;
  }
  for (const Node& c : n.children) collect_tokens(c, out);
}

std::size_t count_leaves(const Node& n) {
  if (n.is_leaf()) return 1;
  std::size_t k = 0;
  for (const Node& c : n.children) k += count_leaves(c);
  return k;
}

}  // namespace

ParseTree::ParseTree(Node root) : root_(std::move(root)) {
  if (root_.is_leaf()) throw Error(Errc::malformed, "tree root must be an internal node");
  check_node(root_);
}

std::vector<std::string> ParseTree::tokens() const {
  std::vector<std::string> out;
  collect_tokens(root_, out);
  return out;
}

std::size_t ParseTree::size() const { return count_leaves(root_); }

void validate_sentence(const Sentence& sentence) {
  if (sentence.empty()) throw Error(Errc::invalid_argument, "empty sentence");
  for (const auto& t : sentence)
    if (!valid_token(t)) throw Error(Errc::invalid_argument, "invalid token '" + t + "'");
}

std::string join_tokens(const Sentence& sentence, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i) out += sep;
    out += sentence[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// LabelInventory

LabelInventory::LabelInventory(std::set<std::string> sps_labels, std::set<std::string> pos_labels)
    : sps_(sps_labels.begin(), sps_labels.end()), pos_(pos_labels.begin(), pos_labels.end()) {
  for (const auto& l : sps_) {
    if (pos_.count(l))
      throw Error(Errc::inventory_overlap, "label '" + l + "' is both an SPS and a POS label");
    if (!valid_token(l)) throw Error(Errc::config, "invalid label '" + l + "'");
  }
  for (const auto& l : pos_)
    if (!valid_token(l)) throw Error(Errc::config, "invalid label '" + l + "'");
}

LabelInventory LabelInventory::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("sps_labels") || !j.contains("pos_labels"))
    throw Error(Errc::config, "label inventory needs 'sps_labels' and 'pos_labels'");
  try {
    return LabelInventory(j.at("sps_labels").get<std::set<std::string>>(),
                          j.at("pos_labels").get<std::set<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, std::string("label inventory: ") + e.what());
  }
}

LabelInventory LabelInventory::load(const std::filesystem::path& path) {
  return from_json(read_json(path));
}

LabelInventory LabelInventory::default_inventory() {
  return LabelInventory(
      {"sps", "subject", "predicate", "object", "att", "adv", "comp", "ind"},
      {"n", "nr", "ns", "nt", "nz", "t", "s", "f", "v", "vd", "vn", "a", "ad", "an", "b", "z", "d",
       "p", "c", "u", "m", "q", "r", "e", "y", "o", "h", "k", "i", "l", "j", "x", "w"});
}

nlohmann::json LabelInventory::to_json() const {
  return {{"sps_labels", std::vector<std::string>(sps_.begin(), sps_.end())},
          {"pos_labels", std::vector<std::string>(pos_.begin(), pos_.end())}};
}

bool LabelInventory::is_sps(std::string_view label) const { return sps_.find(label) != sps_.end(); }
bool LabelInventory::is_pos(std::string_view label) const { return pos_.find(label) != pos_.end(); }

namespace {
void validate_labels(const Node& n, const LabelInventory& inv) {
  if (n.is_leaf()) return;
  if (!inv.contains(n.label)) throw Error(Errc::unknown_label, "unknown label '" + n.label + "'");
  for (const Node& c : n.children) validate_labels(c, inv);
}
}  // namespace

void LabelInventory::validate(const ParseTree& tree) const { validate_labels(tree.root(), *this); }

// ---------------------------------------------------------------------------
// Bracketed text

namespace {

class BracketReader {
 public:
  explicit BracketReader(std::string_view text) : text_(text) {}

  Node read_top() {
    skip_ws();
    if (pos_ >= text_.size()) throw Error(Errc::malformed, "empty input");
    if (text_[pos_] != '(') throw Error(Errc::malformed, "expected '(' at offset " + std::to_string(pos_));
    Node n = read_node();
    skip_ws();
    if (pos_ != text_.size())
      throw Error(text_[pos_] == ')' ? Errc::unbalanced : Errc::malformed,
                  "trailing input at offset " + std::to_string(pos_));
    return n;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                   text_[pos_] == '\r'))
      ++pos_;
  }

  std::string_view read_atom() {
    std::size_t start = pos_;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '(' || c == ')') break;
      ++pos_;
    }
    return text_.substr(start, pos_ - start);
  }

  Node read_node() {
    ++pos_;  // '('
    skip_ws();
    if (pos_ >= text_.size()) throw Error(Errc::unbalanced, "unbalanced brackets");
    std::string label;
    if (text_[pos_] != '(' && text_[pos_] != ')') label = std::string(read_atom());
    std::vector<Node> children;
    for (;;) {
      skip_ws();
      if (pos_ >= text_.size()) throw Error(Errc::unbalanced, "unbalanced brackets");
      char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        children.push_back(read_node());
      } else {
        children.push_back(Node::leaf(std::string(read_atom())));
      }
    }
    if (children.empty())
      throw Error(Errc::empty_node, label.empty() ? "empty node '()'" : "node '" + label + "' has no children");
    if (label.empty()) {
      if (children.size() == 1 && !children.front().is_leaf()) return std::move(children.front());
      throw Error(Errc::empty_node, "unlabeled node");
    }
    return Node::internal(std::move(label), std::move(children));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void serialize_node(const Node& n, std::string& out) {
  if (n.is_leaf()) {
    out += n.token;
    return;
  }
  out += '(';
  out += n.label;
  for (const Node& c : n.children) {
    out += ' ';
    serialize_node(c, out);
  }
  out += ')';
}

}  // namespace

ParseTree parse_bracketed(std::string_view text, const LabelInventory* inventory) {
  ParseTree tree(BracketReader(text).read_top());
  if (inventory) inventory->validate(tree);
  return tree;
}

std::string serialize(const ParseTree& tree) {
  std::string out;
  serialize_node(tree.root(), out);
  return out;
}

// ---------------------------------------------------------------------------
// POS normalization

namespace {

bool deletable(const Node& n, const LabelInventory& inv) {
  if (n.is_leaf() || !inv.is_pos(n.label)) return false;
  return std::none_of(n.children.begin(), n.children.end(), [](const Node& c) { return c.is_leaf(); });
}

// Children are normalized before the parent inspects them, and splicing a
// deletable child only moves already-normalized internal nodes up, so a
// single bottom-up pass reaches the fixpoint.
Node normalize_node(const Node& n, const LabelInventory& inv) {
  if (n.is_leaf()) return n;
  std::vector<Node> kids;
  kids.reserve(n.children.size());
  for (const Node& c : n.children) {
    Node nc = normalize_node(c, inv);
    if (deletable(nc, inv)) {
      for (Node& g : nc.children) kids.push_back(std::move(g));
    } else {
      kids.push_back(std::move(nc));
    }
  }
  return Node::internal(n.label, std::move(kids));
}

}  // namespace

ParseTree normalize_pos_nodes(const ParseTree& tree, const LabelInventory& inventory) {
  Node root = normalize_node(tree.root(), inventory);
  while (deletable(root, inventory)) {
    if (root.children.size() != 1)
      throw Error(Errc::root_promotion,
                  "root POS node '" + root.label + "' dominates " + std::to_string(root.children.size()) +
                      " constituents and cannot be removed");
    Node child = std::move(root.children.front());
    root = std::move(child);
  }
  return ParseTree(std::move(root));
}

// ---------------------------------------------------------------------------
// Treebank files

std::vector<ParseTree> parse_treebank(std::string_view text, const LabelInventory* inventory) {
  std::vector<ParseTree> trees;
  auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      trees.push_back(parse_bracketed(lines[i], inventory));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(i + 1) + ": " + e.what(), i + 1);
    }
  }
  return trees;
}

std::vector<ParseTree> read_treebank(const std::filesystem::path& path, const LabelInventory* inventory) {
  std::string text = read_file(path);
  try {
    return parse_treebank(text, inventory);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ":" + e.what(), e.line());
  }
}

void write_treebank(const std::filesystem::path& path, const std::vector<ParseTree>& trees) {
  std::string out;
  for (const auto& t : trees) {
    out += serialize(t);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<Sentence> read_sentences(const std::filesystem::path& path) {
  std::vector<Sentence> out;
  for (const auto& line : split_lines(read_file(path))) {
    auto toks = split_ws(line);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

void write_sentences(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    out += join_tokens(s);
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace sps
