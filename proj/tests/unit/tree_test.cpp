#include <algorithm>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "random_trees.hpp"
#include "sps/tree.hpp"

using namespace sps;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no sps::Error thrown";
  return Errc::io;
}

// Structural equality written out by hand, independent of operator==.
bool same_shape(const Node& a, const Node& b) {
  if (a.is_leaf() != b.is_leaf()) return false;
  if (a.is_leaf()) return a.token == b.token;
  if (a.label != b.label || a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!same_shape(a.children[i], b.children[i])) return false;
  return true;
}

// A POS node all of whose children are internal. Mixed POS nodes that still
// dominate a token directly are left alone.
bool has_pos_over_internal(const Node& n, const LabelInventory& inv) {
  if (n.is_leaf()) return false;
  if (inv.is_pos(n.label) &&
      std::none_of(n.children.begin(), n.children.end(), [](const Node& c) { return c.is_leaf(); }))
    return true;
  for (const auto& c : n.children)
    if (has_pos_over_internal(c, inv)) return true;
  return false;
}

}  // namespace

TEST(Bracketed, ParsesThreeChildAdverbial) {
  const auto inv = LabelInventory::default_inventory();
  const ParseTree t = parse_bracketed("(adv (t 昨天) (t 晚上) (w ，))", &inv);
  EXPECT_EQ(t.root().label, "adv");
  ASSERT_EQ(t.root().children.size(), 3u);
  EXPECT_EQ(t.tokens(), (Sentence{"昨天", "晚上", "，"}));
  for (const auto& c : t.root().children) EXPECT_TRUE(c.is_preterminal());
}

TEST(Bracketed, MinimalTree) {
  const LabelInventory inv({"x"}, {});
  const ParseTree t = parse_bracketed("(x a)", &inv);
  EXPECT_EQ(t.root().label, "x");
  EXPECT_EQ(t.tokens(), (Sentence{"a"}));
  EXPECT_EQ(t.size(), 1u);
}

TEST(Bracketed, Errors) {
  EXPECT_EQ(code_of([] { parse_bracketed("(a (b"); }), Errc::unbalanced);
  EXPECT_EQ(code_of([] { parse_bracketed("(a b))"); }), Errc::unbalanced);
  EXPECT_EQ(code_of([] { parse_bracketed("()"); }), Errc::empty_node);
  EXPECT_EQ(code_of([] { parse_bracketed("(x)"); }), Errc::empty_node);
  const auto inv = LabelInventory::default_inventory();
  EXPECT_EQ(code_of([&] { parse_bracketed("(NP (n a))", &inv); }), Errc::unknown_label);
}

TEST(Bracketed, UnlabeledWrapperIsRemoved) {
  const ParseTree t = parse_bracketed("( (sps (n a) (v b)) )");
  EXPECT_EQ(serialize(t), "(sps (n a) (v b))");
}

TEST(Bracketed, SerializeCanonicalSpacing) {
  EXPECT_EQ(serialize(parse_bracketed("  (adv   (t 昨天)\t(t 晚上) (w ，) ) ")), "(adv (t 昨天) (t 晚上) (w ，))");
}

TEST(Bracketed, RoundTripProperty) {
  Rng rng = make_rng(7, "roundtrip");
  for (int i = 0; i < 1000; ++i) {
    const ParseTree t = testkit::random_tree(rng);
    const std::string s = serialize(t);
    const ParseTree back = parse_bracketed(s);
    ASSERT_TRUE(same_shape(t.root(), back.root())) << s;
    ASSERT_EQ(serialize(back), s);
  }
}

TEST(Inventory, OverlapRejected) {
  EXPECT_EQ(code_of([] { LabelInventory({"a", "n"}, {"n"}); }), Errc::inventory_overlap);
}

TEST(Inventory, DefaultHasCoreLabels) {
  const auto inv = LabelInventory::default_inventory();
  for (const char* l : {"sps", "subject", "predicate", "object", "att", "adv", "comp", "ind"}) EXPECT_TRUE(inv.is_sps(l));
  for (const char* l : {"n", "v", "t", "w", "u", "d"}) EXPECT_TRUE(inv.is_pos(l));
  const auto again = LabelInventory::from_json(inv.to_json());
  EXPECT_EQ(again.sps_labels(), inv.sps_labels());
  EXPECT_EQ(again.pos_labels(), inv.pos_labels());
}

TEST(Normalize, NestedTimeWords) {
  const auto inv = LabelInventory::default_inventory();
  const auto t = normalize_pos_nodes(parse_bracketed("(adv (t (t 昨天) (t 晚上)) (w ，))"), inv);
  EXPECT_EQ(serialize(t), "(adv (t 昨天) (t 晚上) (w ，))");
}

TEST(Normalize, DoubleNesting) {
  const auto inv = LabelInventory::default_inventory();
  EXPECT_EQ(serialize(normalize_pos_nodes(parse_bracketed("(adv (t (t (t a))) )"), inv)), "(adv (t a))");
}

TEST(Normalize, CleanTreeUnchanged) {
  const auto inv = LabelInventory::default_inventory();
  const auto t = parse_bracketed("(sps (subject (n 我)) (predicate (v 看) (object (n 书))) (w 。))");
  EXPECT_EQ(normalize_pos_nodes(t, inv), t);
}

TEST(Normalize, RootPromotion) {
  const auto inv = LabelInventory::default_inventory();
  EXPECT_EQ(code_of([&] { normalize_pos_nodes(parse_bracketed("(t (t a) (t b))"), inv); }), Errc::root_promotion);
  EXPECT_EQ(serialize(normalize_pos_nodes(parse_bracketed("(t (n a))"), inv)), "(n a)");
}

TEST(Normalize, PropertiesOnRandomTrees) {
  const auto inv = LabelInventory::default_inventory();
  Rng rng = make_rng(11, "normalize");
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const ParseTree t = testkit::random_unnormalized_tree(rng);
    ParseTree once = t;
    try {
      once = normalize_pos_nodes(t, inv);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), Errc::root_promotion);
      continue;
    }
    ++checked;
    ASSERT_EQ(once.tokens(), t.tokens()) << serialize(t);
    ASSERT_FALSE(has_pos_over_internal(once.root(), inv)) << serialize(once);
    ASSERT_EQ(normalize_pos_nodes(once, inv), once) << serialize(once);
  }
  EXPECT_GT(checked, 900);
}

TEST(Treebank, ErrorsCarryLineNumbers) {
  const auto inv = LabelInventory::default_inventory();
  try {
    parse_treebank("(sps (n a))\n\n(sps (XX b))\n", &inv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_label);
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Treebank, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "sps_tree_test";
  std::filesystem::create_directories(dir);
  Rng rng = make_rng(3, "file");
  std::vector<ParseTree> trees;
  for (int i = 0; i < 20; ++i) trees.push_back(testkit::random_tree(rng));
  write_treebank(dir / "tb.txt", trees);
  EXPECT_EQ(read_treebank(dir / "tb.txt"), trees);

  write_sentences(dir / "s.txt", {{"a", "b"}, {"c"}});
  EXPECT_EQ(read_sentences(dir / "s.txt"), (std::vector<Sentence>{{"a", "b"}, {"c"}}));
  std::filesystem::remove_all(dir);
}

TEST(Sentence, Validation) {
  EXPECT_EQ(code_of([] { validate_sentence({}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { validate_sentence({"a", ""}); }), Errc::invalid_argument);
  EXPECT_NO_THROW(validate_sentence({"a"}));
}
