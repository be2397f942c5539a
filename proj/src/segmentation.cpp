#include "sps/segmentation.hpp"

#include <algorithm>
#include <optional>
#include <set>

#include "sps/io.hpp"
#include "sps/parallel.hpp"

namespace sps {

// ---------------------------------------------------------------------------
// Lexicon / SplitTable

Lexicon::Lexicon(std::vector<std::string> words) : words_(std::move(words)) {
  std::erase_if(words_, [](const std::string& w) { return w.empty(); });
  std::sort(words_.begin(), words_.end());
  words_.erase(std::unique(words_.begin(), words_.end()), words_.end());
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::vector<std::string> words;
  for (const auto& line : split_lines(read_file(path))) {
    auto w = trim(line);
    if (!w.empty()) words.emplace_back(w);
  }
  return Lexicon(std::move(words));
}

bool Lexicon::contains(std::string_view word) const {
  return std::binary_search(words_.begin(), words_.end(), word, std::less<>{});
}

bool Lexicon::is_strict_prefix(std::string_view s) const {
  auto it = std::upper_bound(words_.begin(), words_.end(), s, std::less<>{});
  // Every word with prefix s sorts at or after s; the first one strictly
  // greater than s is the only candidate we need to look at.
  return it != words_.end() && it->size() > s.size() && std::string_view(*it).substr(0, s.size()) == s;
}

SplitTable::SplitTable(std::map<std::string, std::vector<std::string>> entries) : entries_(std::move(entries)) {
  for (const auto& [word, parts] : entries_) {
    if (word.empty() || parts.empty()) throw Error(Errc::config, "split table entry '" + word + "' is empty");
    std::string cat;
    for (const auto& p : parts) {
      if (!valid_token(p)) throw Error(Errc::config, "split table entry '" + word + "' has an invalid part");
      cat += p;
    }
    if (cat != word)
      throw Error(Errc::config, "split table parts of '" + word + "' concatenate to '" + cat + "'");
  }
}

SplitTable SplitTable::load(const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::string>> entries;
  auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw Error(Errc::config, path.string() + ":" + std::to_string(i + 1) + ": expected 'word<TAB>parts'", i + 1);
    std::string word(trim(std::string_view(lines[i]).substr(0, tab)));
    entries[word] = split_ws(std::string_view(lines[i]).substr(tab + 1));
  }
  try {
    return SplitTable(std::move(entries));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::string> SplitTable::finest(const std::string& word) const {
  auto it = entries_.find(word);
  if (it == entries_.end() || it->second.size() < 2) return {word};
  std::vector<std::string> out;
  for (const auto& p : it->second) {
    auto sub = finest(p);  // parts are strictly shorter than the key
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

TransferReport& TransferReport::operator+=(const TransferReport& o) {
  merged += o.merged;
  split += o.split;
  misaligned.insert(misaligned.end(), o.misaligned.begin(), o.misaligned.end());
  unmatched_logged.insert(unmatched_logged.end(), o.unmatched_logged.begin(), o.unmatched_logged.end());
  flagged.insert(flagged.end(), o.flagged.begin(), o.flagged.end());
  ambiguous.insert(ambiguous.end(), o.ambiguous.begin(), o.ambiguous.end());
  return *this;
}

nlohmann::json TransferReport::to_json() const {
  nlohmann::json j;
  j["merged"] = merged;
  j["split"] = split;
  j["misaligned"] = nlohmann::json::array();
  for (const auto& m : misaligned)
    j["misaligned"].push_back({{"tree_index", m.tree_index},
                               {"leaf_index", m.leaf_index},
                               {"surface", m.surface},
                               {"before", m.before},
                               {"after", m.after}});
  j["unmatched_logged"] = nlohmann::json::array();
  for (const auto& u : unmatched_logged) j["unmatched_logged"].push_back({{"tree_index", u.tree_index}, {"leaf", u.leaf}});
  j["flagged"] = nlohmann::json::array();
  for (const auto& f : flagged)
    j["flagged"].push_back({{"tree_index", f.tree_index}, {"leaf_index", f.leaf_index}, {"pieces", f.pieces}});
  j["ambiguous"] = nlohmann::json::array();
  for (const auto& a : ambiguous)
    j["ambiguous"].push_back({{"tree_index", a.tree_index},
                              {"leaf_index", a.leaf_index},
                              {"pieces", a.pieces},
                              {"first_pass", a.first_pass},
                              {"second_pass", a.second_pass},
                              {"resolved", a.resolved}});
  return j;
}

// ---------------------------------------------------------------------------
// Word units: a bare leaf or a POS node over one leaf. Merges and splits only
// happen inside a maximal run of adjacent units under one parent.

namespace {

struct Unit {
  std::string pos;  // empty for a bare leaf
  std::string token;
  std::vector<std::string> pieces;
  bool flagged = false;
};

bool is_unit(const Node& n) { return n.is_leaf() || n.is_preterminal(); }

Unit to_unit(const Node& n) {
  if (n.is_leaf()) return Unit{"", n.token, {n.token}, false};
  return Unit{n.label, n.children.front().token, {n.children.front().token}, false};
}

Node from_unit(const Unit& u) {
  if (u.pos.empty()) return Node::leaf(u.token);
  return Node::internal(u.pos, {Node::leaf(u.token)});
}

std::size_t leaf_count(const Node& n) {
  if (n.is_leaf()) return 1;
  std::size_t k = 0;
  for (const auto& c : n.children) k += leaf_count(c);
  return k;
}

// fn(run, in_start, out_start) may rewrite the run in place; the indices are
// global leaf positions in the input and output trees.
template <class Fn>
Node rewrite_runs(const Node& n, std::size_t& in_idx, std::size_t& out_idx, Fn& fn) {
  std::vector<Node> kids;
  std::size_t i = 0;
  while (i < n.children.size()) {
    if (!is_unit(n.children[i])) {
      kids.push_back(rewrite_runs(n.children[i], in_idx, out_idx, fn));
      ++i;
      continue;
    }
    std::vector<Unit> run;
    while (i < n.children.size() && is_unit(n.children[i])) run.push_back(to_unit(n.children[i++]));
    const std::size_t in_start = in_idx;
    const std::size_t out_start = out_idx;
    in_idx += run.size();
    fn(run, in_start, out_start);
    out_idx += run.size();
    for (const auto& u : run) kids.push_back(from_unit(u));
  }
  return Node::internal(n.label, std::move(kids));
}

template <class Fn>
ParseTree rewrite_tree(const ParseTree& tree, Fn fn) {
  std::size_t in_idx = 0, out_idx = 0;
  return ParseTree(rewrite_runs(tree.root(), in_idx, out_idx, fn));
}

struct PassLog {
  std::vector<Misalignment> misaligned;
  std::vector<UnmatchedLeaf> unmatched;
};

// One left-to-right prefix-first scan. Returns the number of merges.
std::size_t merge_scan(std::vector<Unit>& run, const Lexicon& lex, std::size_t lookahead, std::size_t tree_index,
                       std::size_t out_start, PassLog& log) {
  std::vector<Unit> out;
  out.reserve(run.size());
  std::size_t edits = 0;
  std::size_t i = 0;
  while (i < run.size()) {
    const std::string& tok = run[i].token;
    const bool word = lex.contains(tok);
    const bool extendable = lex.is_strict_prefix(tok) && i + 1 < run.size();
    if (word && !extendable) {
      out.push_back(std::move(run[i++]));
      continue;
    }
    if (extendable) {
      std::string cat = tok;
      std::optional<std::size_t> best;
      std::string best_cat;
      for (std::size_t j = i + 1; j < run.size() && j - i + 1 <= lookahead; ++j) {
        cat += run[j].token;
        if (lex.contains(cat)) {
          best = j;
          best_cat = cat;
        }
        if (!lex.is_strict_prefix(cat)) break;
      }
      if (best) {
        Unit merged{run[i].pos, best_cat, {}, run[i].flagged || word};
        for (std::size_t k = i; k <= *best; ++k) {
          merged.pieces.insert(merged.pieces.end(), run[k].pieces.begin(), run[k].pieces.end());
          merged.flagged = merged.flagged || run[k].flagged;
        }
        out.push_back(std::move(merged));
        ++edits;
        i = *best + 1;
        continue;
      }
      if (!word)
        log.misaligned.push_back(Misalignment{tree_index, out_start + out.size(), tok + run[i + 1].token,
                                              {tok, run[i + 1].token}, {tok}});
      out.push_back(std::move(run[i++]));
      continue;
    }
    log.unmatched.push_back(UnmatchedLeaf{tree_index, tok});
    out.push_back(std::move(run[i++]));
  }
  run = std::move(out);
  return edits;
}

std::vector<std::string> word_first(const std::vector<std::string>& pieces, const Lexicon& lex,
                                    std::size_t lookahead) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < pieces.size()) {
    const std::string& tok = pieces[i];
    if (lex.contains(tok) || !lex.is_strict_prefix(tok) || i + 1 == pieces.size()) {
      out.push_back(tok);
      ++i;
      continue;
    }
    std::string cat = tok;
    std::optional<std::size_t> best;
    std::string best_cat;
    for (std::size_t j = i + 1; j < pieces.size() && j - i + 1 <= lookahead; ++j) {
      cat += pieces[j];
      if (lex.contains(cat)) {
        best = j;
        best_cat = cat;
      }
      if (!lex.is_strict_prefix(cat)) break;
    }
    if (best) {
      out.push_back(best_cat);
      i = *best + 1;
    } else {
      out.push_back(tok);
      ++i;
    }
  }
  return out;
}

std::vector<std::string> tokens_of(const std::vector<Unit>& units, std::size_t a, std::size_t b) {
  std::vector<std::string> out;
  for (std::size_t k = a; k < b; ++k) out.push_back(units[k].token);
  return out;
}

std::string concat(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += p;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

ParseTree split_finest(const ParseTree& tree, const SplitTable& table, TransferReport* report) {
  std::size_t splits = 0;
  auto out = rewrite_tree(tree, [&](std::vector<Unit>& run, std::size_t, std::size_t) {
    std::vector<Unit> next;
    for (auto& u : run) {
      auto parts = table.finest(u.token);
      if (parts.size() == 1) {
        next.push_back(std::move(u));
        continue;
      }
      ++splits;
      for (auto& p : parts) next.push_back(Unit{u.pos, p, {p}, false});
    }
    run = std::move(next);
  });
  if (report) report->split += splits;
  return out;
}

SegmentationResult merge_pass(const ParseTree& tree, const Lexicon& lexicon, const SegmentationOptions& opts,
                              std::size_t tree_index) {
  if (opts.lookahead < 2) throw Error(Errc::config, "merge lookahead must be at least 2");
  TransferReport report;
  ParseTree out = rewrite_tree(tree, [&](std::vector<Unit>& run, std::size_t, std::size_t out_start) {
    for (;;) {
      PassLog log;
      std::size_t edits = merge_scan(run, lexicon, opts.lookahead, tree_index, out_start, log);
      report.merged += edits;
      if (edits == 0) {
        report.misaligned.insert(report.misaligned.end(), log.misaligned.begin(), log.misaligned.end());
        report.unmatched_logged.insert(report.unmatched_logged.end(), log.unmatched.begin(), log.unmatched.end());
        break;
      }
    }
    for (std::size_t k = 0; k < run.size(); ++k)
      if (run[k].flagged) report.flagged.push_back(FlaggedMerge{tree_index, out_start + k, run[k].pieces});
  });
  return {std::move(out), std::move(report)};
}

SegmentationResult resolve_ambiguous(const ParseTree& merged, const Lexicon& lexicon,
                                     const TransferReport& first_pass, const SegmentationOptions& opts,
                                     std::size_t tree_index) {
  std::map<std::size_t, const FlaggedMerge*> flagged;
  for (const auto& f : first_pass.flagged)
    if (f.tree_index == tree_index) flagged[f.leaf_index] = &f;

  TransferReport report;
  if (flagged.empty()) return {merged, report};

  ParseTree out = rewrite_tree(merged, [&](std::vector<Unit>& run, std::size_t in_start, std::size_t out_start) {
    const std::size_t n = run.size();
    std::vector<bool> in_region(n, false);
    bool any = false;
    for (std::size_t k = 0; k < n; ++k) {
      auto it = flagged.find(in_start + k);
      if (it == flagged.end()) continue;
      if (concat(it->second->pieces) != run[k].token)
        throw Error(Errc::invalid_argument, "flagged merge at leaf " + std::to_string(in_start + k) +
                                                " does not match the tree; pass the merge_pass report of this tree");
      run[k].pieces = it->second->pieces;
      in_region[k] = true;
      if (k + 1 < n) in_region[k + 1] = true;
      any = true;
    }
    if (!any) return;

    std::vector<Unit> next;
    std::size_t k = 0;
    while (k < n) {
      if (!in_region[k]) {
        next.push_back(std::move(run[k++]));
        continue;
      }
      std::size_t a = k;
      while (k < n && in_region[k]) ++k;
      const std::size_t b = k;

      std::vector<std::string> pieces;
      std::vector<std::size_t> owner;
      for (std::size_t u = a; u < b; ++u)
        for (const auto& p : run[u].pieces) {
          pieces.push_back(p);
          owner.push_back(u);
        }
      const auto first = tokens_of(run, a, b);
      const auto second = word_first(pieces, lexicon, opts.lookahead);
      const auto seg = min_word_segmentation(pieces, lexicon);
      const std::size_t leaf_at = out_start + next.size();

      if (seg.empty()) {
        report.misaligned.push_back(Misalignment{tree_index, leaf_at, concat(pieces), pieces, first});
        for (std::size_t u = a; u < b; ++u) next.push_back(std::move(run[u]));
        continue;
      }
      std::vector<Unit> resolved_units;
      std::size_t p = 0;
      for (std::size_t len : seg) {
        std::vector<std::string> parts(pieces.begin() + static_cast<std::ptrdiff_t>(p),
                                       pieces.begin() + static_cast<std::ptrdiff_t>(p + len));
        resolved_units.push_back(Unit{run[owner[p]].pos, concat(parts), parts, false});
        p += len;
      }
      std::vector<std::string> resolved;
      for (const auto& u : resolved_units) resolved.push_back(u.token);
      if (first != second || resolved != first)
        report.ambiguous.push_back(Ambiguity{tree_index, leaf_at, pieces, first, second, resolved});
      for (auto& u : resolved_units) next.push_back(std::move(u));
    }
    run = std::move(next);
  });
  return {std::move(out), std::move(report)};
}

namespace {

// Aligns the token sequences of the same character string and classifies
// each minimal region between shared boundaries.
void classify_alignment(const std::vector<std::string>& before, const std::vector<std::string>& after,
                        std::size_t tree_index, TransferReport& report) {
  std::size_t i = 0, j = 0;
  while (i < before.size() && j < after.size()) {
    const std::size_t i0 = i, j0 = j;
    std::size_t end_b = before[i++].size();
    std::size_t end_a = after[j++].size();
    while (end_b != end_a) {
      if (end_b < end_a) {
        if (i == before.size()) break;
        end_b += before[i++].size();
      } else {
        if (j == after.size()) break;
        end_a += after[j++].size();
      }
    }
    const std::size_t nb = i - i0, na = j - j0;
    if (nb == 1 && na == 1) continue;
    if (na == 1) {
      ++report.merged;
    } else if (nb == 1) {
      ++report.split;
    } else {
      std::vector<std::string> b(before.begin() + static_cast<std::ptrdiff_t>(i0),
                                 before.begin() + static_cast<std::ptrdiff_t>(i));
      std::vector<std::string> a(after.begin() + static_cast<std::ptrdiff_t>(j0),
                                 after.begin() + static_cast<std::ptrdiff_t>(j));
      report.misaligned.push_back(Misalignment{tree_index, j0, concat(b), b, a});
    }
  }
}

}  // namespace

SegmentationResult transfer(const ParseTree& tree, const SplitTable& table, const Lexicon& lexicon,
                            const SegmentationOptions& opts, std::size_t tree_index) {
  ParseTree finest = split_finest(tree, table);
  auto first = merge_pass(finest, lexicon, opts, tree_index);
  auto second = resolve_ambiguous(first.tree, lexicon, first.report, opts, tree_index);

  TransferReport report;
  classify_alignment(tree.tokens(), second.tree.tokens(), tree_index, report);
  report.misaligned.insert(report.misaligned.end(), first.report.misaligned.begin(), first.report.misaligned.end());
  report.misaligned.insert(report.misaligned.end(), second.report.misaligned.begin(), second.report.misaligned.end());
  report.unmatched_logged = first.report.unmatched_logged;
  report.flagged = first.report.flagged;
  report.ambiguous = second.report.ambiguous;
  return {std::move(second.tree), std::move(report)};
}

CorpusTransfer transfer_corpus(const std::vector<ParseTree>& trees, const SplitTable& table, const Lexicon& lexicon,
                               const SegmentationOptions& opts, unsigned jobs) {
  std::vector<std::optional<SegmentationResult>> results(trees.size());
  parallel_for(trees.size(), jobs, [&](std::size_t i) { results[i] = transfer(trees[i], table, lexicon, opts, i); });
  CorpusTransfer out;
  out.trees.reserve(trees.size());
  for (auto& r : results) {
    out.trees.push_back(std::move(r->tree));
    out.report += r->report;
  }
  return out;
}

std::vector<std::size_t> min_word_segmentation(const std::vector<std::string>& pieces, const Lexicon& lexicon) {
  const std::size_t n = pieces.size();
  if (n == 0) return {};
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  // count[i] / first[i]: best segmentation of the suffix starting at piece i.
  std::vector<std::size_t> count(n + 1, kNone), first(n + 1, 0);
  count[n] = 0;
  for (std::size_t i = n; i-- > 0;) {
    std::string cat;
    for (std::size_t j = i; j < n; ++j) {
      cat += pieces[j];
      if (count[j + 1] == kNone || !lexicon.contains(cat)) continue;
      const std::size_t c = count[j + 1] + 1;
      // Ties on word count go to the longer first word; the suffix is
      // already optimal under the same order.
      if (count[i] == kNone || c < count[i] || (c == count[i] && j + 1 - i > first[i])) {
        count[i] = c;
        first[i] = j + 1 - i;
      }
    }
  }
  if (count[0] == kNone) return {};
  std::vector<std::size_t> seg;
  for (std::size_t i = 0; i < n; i += first[i]) seg.push_back(first[i]);
  return seg;
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c >= 0xF0)
      len = 4;
    else if (c >= 0xE0)
      len = 3;
    else if (c >= 0xC0)
      len = 2;
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Sentence max_match_tokenize(std::string_view text, const Lexicon& lexicon, std::size_t max_word_chars) {
  Sentence out;
  for (const auto& chunk : split_ws(text)) {
    auto chars = utf8_chars(chunk);
    std::size_t i = 0;
    while (i < chars.size()) {
      std::size_t best = 1;
      std::string cat;
      for (std::size_t len = 1; len <= max_word_chars && i + len <= chars.size(); ++len) {
        cat += chars[i + len - 1];
        if (len > 1 && lexicon.contains(cat)) best = len;
      }
      std::string word;
      for (std::size_t k = 0; k < best; ++k) word += chars[i + k];
      out.push_back(std::move(word));
      i += best;
    }
  }
  return out;
}

}  // namespace sps
