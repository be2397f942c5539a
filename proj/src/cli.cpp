#include "sps/cli.hpp"

#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "sps/eval.hpp"
#include "sps/generator.hpp"
#include "sps/io.hpp"
#include "sps/mapping.hpp"
#include "sps/parallel.hpp"
#include "sps/parser.hpp"
#include "sps/rules.hpp"
#include "sps/segmentation.hpp"
#include "sps/selection.hpp"
#include "sps/selftrain.hpp"
#include "sps/tree.hpp"

namespace sps {

namespace {

// key=value pairs on one line, prefixed so scripts can grep for it.
class Summary {
 public:
  explicit Summary(std::string command) { line_ << "sps-summary command=" << command; }
  template <class T>
  Summary& add(const std::string& key, const T& value) {
    line_ << ' ' << key << '=' << value;
    return *this;
  }
  Summary& add(const std::string& key, double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", value);
    line_ << ' ' << key << '=' << buf;
    return *this;
  }
  std::string str() const { return line_.str() + " status=ok"; }

 private:
  std::ostringstream line_;
};

struct Common {
  std::uint64_t seed = 1;
  bool seed_given = false;
  unsigned jobs = 1;
  std::string inventory;
};

LabelInventory inventory_of(const Common& c) {
  return c.inventory.empty() ? LabelInventory::default_inventory() : LabelInventory::load(c.inventory);
}

// Reads a parse output: trees plus the `.confidence.tsv` sidecar when present.
std::vector<PseudoTree> read_candidates(const std::string& trees_path, const std::string& conf_path) {
  auto trees = read_treebank(trees_path);
  std::vector<PseudoTree> out;
  for (auto& t : trees) out.push_back({t.tokens(), t, 1.0, false});
  const std::string sidecar = conf_path.empty() ? trees_path + ".confidence.tsv" : conf_path;
  if (!std::filesystem::exists(sidecar)) {
    if (!conf_path.empty()) throw Error(Errc::io, "cannot open " + sidecar);
    return out;
  }
  std::size_t line_no = 0;
  for (const auto& line : split_lines(read_file(sidecar))) {
    ++line_no;
    const auto f = split_ws(line);
    if (f.empty() || f[0] == "id") continue;
    if (f.size() < 3) throw Error(Errc::malformed, sidecar + ": expected id, confidence, fallback", line_no);
    std::size_t id = 0;
    try {
      id = std::stoul(f[0]);
      if (id >= out.size()) throw Error(Errc::malformed, sidecar + ": id out of range", line_no);
      out[id].confidence = std::stod(f[1]);
      out[id].fallback = f[2] == "1";
    } catch (const std::logic_error&) {
      throw Error(Errc::malformed, sidecar + ": bad number", line_no);
    }
  }
  return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sentence pattern structure parsing toolkit", "sps"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  int verbosity = 0;
  app.add_option("--seed", common.seed, "Run seed; every random choice derives from it");
  app.add_option("-j,--jobs", common.jobs, "Worker threads")->check(CLI::Range(1u, 1024u));
  app.add_option("--inventory", common.inventory, "Label inventory JSON (default: built-in)")
      ->check(CLI::ExistingFile);
  app.add_flag("-v,--verbose", verbosity, "More logging (repeatable)");

  std::function<void()> action;

  // convert
  auto* convert_cmd = app.add_subcommand("convert", "Relabel trees through a mapping table");
  std::string cv_in, cv_out, cv_table, cv_report;
  bool cv_strict = false, cv_normalize = false;
  convert_cmd->add_option("-i,--in", cv_in, "Input treebank")->required()->check(CLI::ExistingFile);
  convert_cmd->add_option("-o,--out", cv_out, "Output treebank")->required();
  convert_cmd->add_option("-t,--table", cv_table, "Mapping table JSON")->required()->check(CLI::ExistingFile);
  convert_cmd->add_option("--report", cv_report, "Write the conversion report as JSON");
  convert_cmd->add_flag("--strict", cv_strict, "Fail on nodes no rule covers");
  convert_cmd->add_flag("--normalize", cv_normalize, "Remove redundant POS nodes after relabeling");
  convert_cmd->callback([&] {
    action = [&] {
      const auto inv = inventory_of(common);
      const auto table = MappingTable::load(cv_table, &inv);
      auto result = convert_corpus(read_treebank(cv_in), table, {cv_strict}, common.jobs);
      if (cv_normalize)
        for (auto& t : result.trees) t = normalize_pos_nodes(t, inv);
      write_treebank(cv_out, result.trees);
      if (!cv_report.empty()) write_json_atomic(cv_report, result.report.to_json());
      err << Summary("convert")
                 .add("trees", result.report.trees)
                 .add("nodes", result.report.nodes)
                 .add("fallbacks", result.report.fallback_count)
                 .str()
          << '\n';
    };
  });

  // normalize
  auto* norm_cmd = app.add_subcommand("normalize", "Remove POS nodes that dominate other internal nodes");
  std::string nm_in, nm_out;
  norm_cmd->add_option("-i,--in", nm_in, "Input treebank")->required()->check(CLI::ExistingFile);
  norm_cmd->add_option("-o,--out", nm_out, "Output treebank")->required();
  norm_cmd->callback([&] {
    action = [&] {
      const auto inv = inventory_of(common);
      auto trees = read_treebank(nm_in, &inv);
      std::size_t changed = 0;
      for (auto& t : trees) {
        auto n = normalize_pos_nodes(t, inv);
        changed += !(n == t);
        t = std::move(n);
      }
      write_treebank(nm_out, trees);
      err << Summary("normalize").add("trees", trees.size()).add("changed", changed).str() << '\n';
    };
  });

  // transfer-seg
  auto* seg_cmd = app.add_subcommand("transfer-seg", "Re-segment a treebank to a target lexicon");
  std::string sg_in, sg_out, sg_lex, sg_split, sg_report;
  std::size_t sg_lookahead = 3;
  seg_cmd->add_option("-i,--in", sg_in, "Input treebank")->required()->check(CLI::ExistingFile);
  seg_cmd->add_option("-o,--out", sg_out, "Output treebank")->required();
  seg_cmd->add_option("-l,--lexicon", sg_lex, "Target lexicon, one word per line")
      ->required()
      ->check(CLI::ExistingFile);
  seg_cmd->add_option("-s,--split-table", sg_split, "Split table TSV: word<TAB>parts")->check(CLI::ExistingFile);
  seg_cmd->add_option("--lookahead", sg_lookahead, "Maximum leaves merged at once")->check(CLI::Range(2, 16));
  seg_cmd->add_option("--report", sg_report, "Write the transfer report as JSON");
  seg_cmd->callback([&] {
    action = [&] {
      const SplitTable table = sg_split.empty() ? SplitTable{} : SplitTable::load(sg_split);
      auto result = transfer_corpus(read_treebank(sg_in), table, Lexicon::load(sg_lex), {sg_lookahead}, common.jobs);
      write_treebank(sg_out, result.trees);
      if (!sg_report.empty()) write_json_atomic(sg_report, result.report.to_json());
      out << "merged " << result.report.merged << "\nsplit " << result.report.split << "\nmisaligned "
          << result.report.misaligned.size() << "\nunmatched " << result.report.unmatched_logged.size()
          << "\nambiguous " << result.report.ambiguous.size() << '\n';
      err << Summary("transfer-seg")
                 .add("trees", result.trees.size())
                 .add("merged", result.report.merged)
                 .add("split", result.report.split)
                 .add("misaligned", result.report.misaligned.size())
                 .str()
          << '\n';
    };
  });

  // extract-rules
  auto* rules_cmd = app.add_subcommand("extract-rules", "List the one-level rules of a treebank");
  std::string rl_in, rl_out;
  bool rl_counts = false, rl_no_punct = false;
  rules_cmd->add_option("-i,--in", rl_in, "Input treebank")->required()->check(CLI::ExistingFile);
  rules_cmd->add_option("-o,--out", rl_out, "Output file (default: stdout)");
  rules_cmd->add_flag("--counts", rl_counts, "Append the frequency of each rule");
  rules_cmd->add_flag("--no-punct", rl_no_punct, "Drop punctuation children");
  rules_cmd->callback([&] {
    action = [&] {
      RuleOptions ro;
      ro.include_punct = !rl_no_punct;
      const Counts c = rule_counts(read_treebank(rl_in), ro);
      const std::string text = format_rule_inventory(c, rl_counts);
      if (rl_out.empty())
        out << text;
      else
        write_file_atomic(rl_out, text);
      err << Summary("extract-rules").add("distinct", c.items().size()).add("total", c.total()).str() << '\n';
    };
  });

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Generate target-domain sentences");
  std::string gn_cfg, gn_source, gn_examples, gn_out;
  std::size_t gn_count = 100, gn_per_request = 10, gn_max_rules = 6, gn_examples_n = 3;
  double gn_sigma = -1.0;
  gen_cmd->add_option("-c,--generator", gn_cfg, "Generator config JSON ({\"kind\": \"mock\"|\"service\", ...})")
      ->required()
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--source", gn_source, "Treebank supplying rules and the length distribution")
      ->required()
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--examples", gn_examples, "Target-domain example sentences")
      ->required()
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("-o,--out", gn_out, "Output sentences (provenance goes next to it)")->required();
  gen_cmd->add_option("-n,--count", gn_count, "Pool size")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--per-request", gn_per_request, "Sentences asked for per request")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--max-rules", gn_max_rules, "Upper bound on rules per prompt")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--example-count", gn_examples_n, "Example sentences per prompt")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--length-sigma", gn_sigma, "Length standard deviation (default: a quarter of the mean)");
  gen_cmd->callback([&] {
    action = [&] {
      const auto backend = make_generator(read_json(gn_cfg), std::filesystem::path(gn_cfg).parent_path());
      const auto source = read_treebank(gn_source);
      PromptConfig pc;
      pc.max_rules = gn_max_rules;
      pc.example_count = gn_examples_n;
      pc.length_sigma = gn_sigma;
      const Pool pool = generate_pool(*backend, SourceStats::of(source), read_sentences(gn_examples),
                                      rule_counts(source), pc, {gn_count, gn_per_request, 0}, common.seed);
      if (pool.sentences.empty()) throw Error(Errc::empty_generation, "no sentence was generated");
      write_batch(gn_out, pool.sentences, pool.provenance);
      err << Summary("generate")
                 .add("sentences", pool.sentences.size())
                 .add("failed_requests", pool.failed_requests)
                 .str()
          << '\n';
    };
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a PCFG parser");
  std::string tr_in, tr_out;
  double tr_alpha = 0.01;
  std::uint64_t tr_unk = 1;
  train_cmd->add_option("-i,--in", tr_in, "Training treebank")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("-o,--out", tr_out, "Model JSON")->required();
  train_cmd->add_option("--alpha", tr_alpha, "Additive smoothing")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--unk-threshold", tr_unk, "Words this rare train the unknown-word classes");
  train_cmd->callback([&] {
    action = [&] {
      const auto trees = read_treebank(tr_in);
      const auto model = PcfgModel::train(trees, {tr_alpha, tr_unk, nullptr});
      model.save(tr_out);
      err << Summary("train")
                 .add("trees", trees.size())
                 .add("symbols", model.symbol_count())
                 .add("rules", model.rule_count())
                 .str()
          << '\n';
    };
  });

  // parse
  auto* parse_cmd = app.add_subcommand("parse", "Parse tokenized sentences");
  std::string ps_model, ps_in, ps_out, ps_table;
  parse_cmd->add_option("-m,--model", ps_model, "Model JSON from `train`")->required()->check(CLI::ExistingFile);
  parse_cmd->add_option("-i,--in", ps_in, "Sentences, one per line")->required()->check(CLI::ExistingFile);
  parse_cmd->add_option("-o,--out", ps_out, "Output treebank; confidences go to <out>.confidence.tsv")->required();
  parse_cmd->add_option("--mapping", ps_table, "Relabel the parses through this mapping table")
      ->check(CLI::ExistingFile);
  parse_cmd->callback([&] {
    action = [&] {
      std::shared_ptr<const Parser> parser = std::make_shared<PcfgModel>(PcfgModel::load(ps_model));
      if (!ps_table.empty()) {
        const auto inv = inventory_of(common);
        parser = std::make_shared<MappingParser>(parser, MappingTable::load(ps_table, &inv), inv);
      }
      const auto sentences = read_sentences(ps_in);
      std::vector<std::optional<PseudoTree>> parsed(sentences.size());
      parallel_for(sentences.size(), common.jobs, [&](std::size_t i) { parsed[i] = parser->parse(sentences[i]); });
      std::vector<ParseTree> trees;
      std::ostringstream tsv;
      tsv << "id\tconfidence\tfallback\n";
      std::size_t fallbacks = 0;
      for (std::size_t i = 0; i < parsed.size(); ++i) {
        trees.push_back(parsed[i]->tree);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12g", parsed[i]->confidence);
        tsv << i << '\t' << buf << '\t' << (parsed[i]->fallback ? 1 : 0) << '\n';
        fallbacks += parsed[i]->fallback;
      }
      write_treebank(ps_out, trees);
      write_file_atomic(ps_out + ".confidence.tsv", tsv.str());
      err << Summary("parse").add("sentences", trees.size()).add("fallbacks", fallbacks).str() << '\n';
    };
  });

  // select
  auto* sel_cmd = app.add_subcommand("select", "Pick the top-K parsed candidates under a criterion");
  std::string sl_trees, sl_conf, sl_source, sl_target, sl_out, sl_kind = "csrs", sl_combine = "staged";
  std::size_t sl_k = 1, sl_mult = 2;
  double sl_weight = 0.5;
  sel_cmd->add_option("--candidates", sl_trees, "Parsed candidates (output of `parse`)")
      ->required()
      ->check(CLI::ExistingFile);
  sel_cmd->add_option("--confidence", sl_conf, "Confidence sidecar (default: <candidates>.confidence.tsv)")
      ->check(CLI::ExistingFile);
  sel_cmd->add_option("--criterion", sl_kind, "token | conf | srs | srs_conf | csrs | csrs_conf");
  sel_cmd->add_option("-k", sl_k, "Number of trees to select")->check(CLI::PositiveNumber);
  sel_cmd->add_option("--prefilter", sl_mult, "Prefilter multiplier for combined criteria")
      ->check(CLI::PositiveNumber);
  sel_cmd->add_option("--combine", sl_combine, "staged | weighted");
  sel_cmd->add_option("--weight", sl_weight, "Rule-score weight for --combine weighted");
  sel_cmd->add_option("--source", sl_source, "Source treebank (token, srs)")->check(CLI::ExistingFile);
  sel_cmd->add_option("--converted-target", sl_target, "Converted target treebank (csrs)")
      ->check(CLI::ExistingFile);
  sel_cmd->add_option("-o,--out", sl_out, "Selected treebank; scores go to <out>.scores.tsv")->required();
  sel_cmd->callback([&] {
    action = [&] {
      CriterionConfig cfg;
      cfg.kind = parse_criterion(sl_kind);
      cfg.k = sl_k;
      cfg.prefilter_multiplier = sl_mult;
      cfg.combine = sl_combine;
      cfg.weight = sl_weight;
      References refs;
      if (!sl_source.empty()) {
        const auto s = read_treebank(sl_source);
        refs.source_tokens.emplace(token_counts(s));
        refs.source_rules.emplace(rule_counts(s));
      }
      if (!sl_target.empty()) refs.target_rules.emplace(rule_counts(read_treebank(sl_target)));
      const auto candidates = read_candidates(sl_trees, sl_conf);
      const auto scored = score(candidates, cfg, refs, common.jobs);
      const auto chosen = select_top_k(scored, candidates, cfg);
      write_selection(sl_out, candidates, scored, chosen, cfg.kind);
      err << Summary("select")
                 .add("candidates", candidates.size())
                 .add("scored", scored.size())
                 .add("selected", chosen.size())
                 .str()
          << '\n';
    };
  });

  // self-train
  auto* st_cmd = app.add_subcommand("self-train", "Run the iterative self-training loop");
  std::string st_cfg, st_out;
  st_cmd->add_option("-c,--config", st_cfg, "Run config JSON")->required()->check(CLI::ExistingFile);
  st_cmd->add_option("-o,--out", st_out, "Run directory (default: run/ next to the config)");
  st_cmd->callback([&] {
    action = [&] {
      LoadedRun lr = load_run(st_cfg);
      if (common.seed_given) lr.config.seeds = {common.seed};
      if (common.jobs > 1) lr.config.jobs = common.jobs;
      const std::filesystem::path dir =
          st_out.empty() ? std::filesystem::path(st_cfg).parent_path() / "run" : std::filesystem::path(st_out);
      const auto agg = run_multiseed(lr.config, lr.data, *lr.generator, *lr.backend, dir);
      out << "iteration\ttarget_f1\tsource_f1\n";
      for (std::size_t i = 0; i < agg.mean_target_f1.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu\t%.2f\t%.2f\n", i, agg.mean_target_f1[i], agg.mean_source_f1[i]);
        out << buf;
      }
      err << Summary("self-train")
                 .add("seeds", agg.runs.size())
                 .add("failed", agg.failures.size())
                 .add("target_f1", agg.mean_target_f1.back())
                 .add("source_f1", agg.mean_source_f1.back())
                 .str()
          << '\n';
      if (!agg.failures.empty()) throw Error(Errc::invalid_argument, std::to_string(agg.failures.size()) + " seed(s) aborted");
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Labeled bracket precision, recall and F1");
  std::string ev_pred, ev_gold, ev_json, ev_punct = "include";
  bool ev_pos = false, ev_root = false, ev_table = false;
  eval_cmd->add_option("-p,--pred", ev_pred, "Predicted treebank")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("-g,--gold", ev_gold, "Gold treebank")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--punct", ev_punct, "include | exclude | suffix");
  eval_cmd->add_flag("--include-pos", ev_pos, "Count preterminal spans");
  eval_cmd->add_flag("--include-root", ev_root, "Count the root span");
  eval_cmd->add_flag("--table", ev_table, "Print the per-label table");
  eval_cmd->add_option("--json", ev_json, "Write the report as JSON");
  eval_cmd->callback([&] {
    action = [&] {
      EvalOptions opts;
      opts.punct = parse_punct_mode(ev_punct);
      opts.include_pos = ev_pos;
      opts.include_root = ev_root;
      const auto r = score_corpus(read_treebank(ev_pred), read_treebank(ev_gold), opts, common.jobs);
      char buf[96];
      std::snprintf(buf, sizeof buf, "P %.2f\nR %.2f\nF1 %.2f\n", r.precision, r.recall, r.f1);
      out << buf;
      if (ev_table) out << r.to_table();
      if (!ev_json.empty()) write_json_atomic(ev_json, r.to_json());
      err << Summary("eval").add("sentences", r.sentences).add("f1", r.f1).str() << '\n';
    };
  });

  // report
  auto* rep_cmd = app.add_subcommand("report", "Summarize a run directory or manifest");
  std::string rp_path;
  rep_cmd->add_option("path", rp_path, "Run directory, aggregate.json or manifest.json")
      ->required()
      ->check(CLI::ExistingPath);
  rep_cmd->callback([&] {
    action = [&] {
      std::filesystem::path p = rp_path;
      if (std::filesystem::is_directory(p))
        p = std::filesystem::exists(p / "aggregate.json") ? p / "aggregate.json" : p / "manifest.json";
      const auto j = read_json(p);
      char buf[160];
      if (j.contains("mean_target_f1")) {
        out << "iteration\tmean_target_f1\tmean_source_f1\n";
        const auto t = j["mean_target_f1"].get<std::vector<double>>();
        const auto s = j["mean_source_f1"].get<std::vector<double>>();
        for (std::size_t i = 0; i < t.size(); ++i) {
          std::snprintf(buf, sizeof buf, "%zu\t%.2f\t%.2f\n", i, t[i], s.at(i));
          out << buf;
        }
        err << Summary("report").add("iterations", t.size()).str() << '\n';
        return;
      }
      const auto m = RunManifest::from_json(j);
      out << "iteration\tpool\tselected\ttrain\ttarget_f1\tsource_f1\n";
      for (const auto& r : m.iterations) {
        std::snprintf(buf, sizeof buf, "%zu\t%zu\t%zu\t%zu\t%.2f\t%.2f\n", r.iteration, r.pool_size,
                      r.selected_ids.size(), r.train_size, r.dev_f1_target, r.dev_f1_source);
        out << buf;
      }
      err << Summary("report").add("iterations", m.iterations.size()).add("status", m.status).str() << '\n';
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  common.seed_given = app.count("--seed") > 0;

  auto previous = spdlog::get_level();
  spdlog::set_level(verbosity >= 2 ? spdlog::level::debug : verbosity == 1 ? spdlog::level::info : spdlog::level::warn);
  int code = 0;
  try {
    action();
  } catch (const Error& e) {
    err << "error: " << e.what();
    if (e.line() > 0) err << " (line " << e.line() << ")";
    err << " [" << to_string(e.code()) << "]\n";
    code = e.code() == Errc::config ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = 1;
  }
  spdlog::set_level(previous);
  return code;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace sps
