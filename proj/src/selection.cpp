#include "sps/selection.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "sps/io.hpp"
#include "sps/parallel.hpp"

namespace sps {

std::string to_string(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::token: return "token";
    case CriterionKind::conf: return "conf";
    case CriterionKind::srs: return "srs";
    case CriterionKind::srs_conf: return "srs_conf";
    case CriterionKind::csrs: return "csrs";
    case CriterionKind::csrs_conf: return "csrs_conf";
  }
  return "?";
}

CriterionKind parse_criterion(std::string_view name) {
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::replace(lower.begin(), lower.end(), '-', '_');
  for (auto k : {CriterionKind::token, CriterionKind::conf, CriterionKind::srs, CriterionKind::srs_conf,
                 CriterionKind::csrs, CriterionKind::csrs_conf})
    if (to_string(k) == lower) return k;
  throw Error(Errc::config, "unknown selection criterion '" + std::string(name) + "'");
}

bool uses_confidence(CriterionKind kind) noexcept {
  return kind == CriterionKind::conf || is_combined(kind);
}

bool is_combined(CriterionKind kind) noexcept {
  return kind == CriterionKind::srs_conf || kind == CriterionKind::csrs_conf;
}

void CriterionConfig::validate() const {
  if (k < 1) throw Error(Errc::config, "selection k must be at least 1");
  if (prefilter_multiplier < 1) throw Error(Errc::config, "prefilter_multiplier must be at least 1");
  if (combine != "staged" && combine != "weighted") throw Error(Errc::config, "combine must be staged or weighted");
  if (weight < 0.0 || weight > 1.0) throw Error(Errc::config, "combine weight must lie in [0, 1]");
}

namespace {

const Reference& reference_for(CriterionKind kind, const References& refs) {
  const std::optional<Reference>* r = nullptr;
  const char* what = "";
  switch (kind) {
    case CriterionKind::token:
      r = &refs.source_tokens, what = "source token";
      break;
    case CriterionKind::srs:
    case CriterionKind::srs_conf:
      r = &refs.source_rules, what = "source rule";
      break;
    case CriterionKind::csrs:
    case CriterionKind::csrs_conf:
      r = &refs.target_rules, what = "converted target rule";
      break;
    case CriterionKind::conf:
      break;
  }
  if (!r || !*r || (*r)->counts().empty())
    throw Error(Errc::missing_reference, "criterion " + to_string(kind) + " needs a " + what + " distribution");
  return **r;
}

// Ascending score, then descending confidence, then sentence, then position.
struct RankOrder {
  const std::vector<PseudoTree>& candidates;
  bool operator()(const Scored& a, const Scored& b) const {
    if (a.score != b.score) return a.score < b.score;
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    const auto& sa = candidates[a.index].sentence;
    const auto& sb = candidates[b.index].sentence;
    if (sa != sb) return sa < sb;
    return a.index < b.index;
  }
};

}  // namespace

std::vector<Scored> score(const std::vector<PseudoTree>& candidates, const CriterionConfig& cfg,
                          const References& refs, unsigned jobs) {
  cfg.validate();
  const Reference* ref = cfg.kind == CriterionKind::conf ? nullptr : &reference_for(cfg.kind, refs);

  std::vector<std::optional<Scored>> slots(candidates.size());
  parallel_for(candidates.size(), jobs, [&](std::size_t i) {
    const auto& c = candidates[i];
    if (c.fallback) return;
    Scored s{i, 0.0, c.confidence};
    if (cfg.kind == CriterionKind::conf) {
      if (c.sentence.empty()) return;
      s.score = -c.confidence;
    } else {
      const Counts features =
          cfg.kind == CriterionKind::token ? token_counts(c.sentence) : rule_counts(c.tree, cfg.rule_options);
      if (features.empty()) return;
      s.score = std::ldexp(std::round(std::ldexp(ref->distance(features), 40)), -40);
    }
    slots[i] = s;
  });

  std::vector<Scored> out;
  std::size_t skipped = 0;
  for (auto& s : slots) {
    if (s)
      out.push_back(*s);
    else
      ++skipped;
  }
  if (skipped > 0) spdlog::debug("selection skipped {} fallback or featureless candidates", skipped);
  return out;
}

std::vector<std::size_t> select_top_k(const std::vector<Scored>& scored, const std::vector<PseudoTree>& candidates,
                                      const CriterionConfig& cfg) {
  cfg.validate();
  for (const auto& s : scored)
    if (s.index >= candidates.size()) throw Error(Errc::invalid_argument, "scored index out of range");
  if (scored.size() < cfg.k)
    spdlog::warn("only {} usable candidates for k = {}; selecting all of them", scored.size(), cfg.k);

  std::vector<Scored> ranked = scored;
  const RankOrder order{candidates};

  if (is_combined(cfg.kind) && cfg.combine == "weighted") {
    for (auto& s : ranked) s.score = cfg.weight * s.score + (1.0 - cfg.weight) * (1.0 - s.confidence);
    std::sort(ranked.begin(), ranked.end(), order);
  } else if (is_combined(cfg.kind)) {
    std::sort(ranked.begin(), ranked.end(), order);
    ranked.resize(std::min(ranked.size(), cfg.prefilter_multiplier * cfg.k));
    std::sort(ranked.begin(), ranked.end(), [&](const Scored& a, const Scored& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return order(a, b);
    });
  } else {
    std::sort(ranked.begin(), ranked.end(), order);
  }

  ranked.resize(std::min(ranked.size(), cfg.k));
  std::vector<std::size_t> out;
  out.reserve(ranked.size());
  for (const auto& s : ranked) out.push_back(s.index);
  return out;
}

void write_selection(const std::filesystem::path& path, const std::vector<PseudoTree>& candidates,
                     const std::vector<Scored>& scored, const std::vector<std::size_t>& selected,
                     CriterionKind kind) {
  std::vector<ParseTree> trees;
  std::ostringstream tsv;
  tsv << "id\tkind\tscore\tconfidence\n";
  for (std::size_t idx : selected) {
    trees.push_back(candidates.at(idx).tree);
    auto it = std::find_if(scored.begin(), scored.end(), [&](const Scored& s) { return s.index == idx; });
    const double sc = it == scored.end() ? 0.0 : it->score;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.12g\t%.12g", sc, candidates[idx].confidence);
    tsv << idx << '\t' << to_string(kind) << '\t' << buf << '\n';
  }
  write_treebank(path, trees);
  write_file_atomic(path.string() + ".scores.tsv", tsv.str());
}

}  // namespace sps
