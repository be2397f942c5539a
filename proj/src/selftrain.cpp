#include "sps/selftrain.hpp"

#include <unordered_set>

#include <spdlog/spdlog.h>

#include "sps/io.hpp"
#include "sps/parallel.hpp"

namespace sps {

namespace {

std::string to_string(ParseMode m) { return m == ParseMode::direct ? "direct" : "mapping"; }

ParseMode parse_mode_name(const std::string& s) {
  if (s == "direct") return ParseMode::direct;
  if (s == "mapping") return ParseMode::mapping;
  throw Error(Errc::config, "unknown parse_mode '" + s + "'");
}

std::string to_string(PunctMode m) {
  switch (m) {
    case PunctMode::include: return "include";
    case PunctMode::exclude: return "exclude";
    case PunctMode::suffix: return "suffix";
  }
  return "?";
}

double dev_f1(const Parser& parser, const std::vector<ParseTree>& dev, const EvalOptions& opts, unsigned jobs) {
  std::vector<ParseTree> preds = dev;
  parallel_for(dev.size(), jobs, [&](std::size_t i) { preds[i] = parser.parse(dev[i].tokens()).tree; });
  return score_corpus(preds, dev, opts, jobs).f1;
}

std::vector<ParseTree> concat(const std::vector<ParseTree>& a, const std::vector<ParseTree>& b) {
  std::vector<ParseTree> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

void RunConfig::validate() const {
  criterion.validate();
  if (iterations > 0 && pool_size < 1) throw Error(Errc::config, "pool_size must be at least 1");
  if (sentences_per_request < 1) throw Error(Errc::config, "sentences_per_request must be at least 1");
  if (seeds.empty()) throw Error(Errc::config, "at least one seed is required");
  if (parse_mode == ParseMode::mapping && uses_confidence(criterion.kind))
    throw Error(Errc::config, "criterion " + sps::to_string(criterion.kind) +
                                  " needs parser confidence, which the mapping parse mode does not provide");
}

nlohmann::json RunConfig::snapshot() const {
  return {
      {"iterations", iterations},
      {"pool_size", pool_size},
      {"sentences_per_request", sentences_per_request},
      {"max_requests", max_requests},
      {"criterion", sps::to_string(criterion.kind)},
      {"k", criterion.k},
      {"prefilter_multiplier", criterion.prefilter_multiplier},
      {"combine", criterion.combine},
      {"combine_weight", criterion.weight},
      {"include_punct_rules", criterion.rule_options.include_punct},
      {"prompt",
       {{"length_sigma", prompt.length_sigma},
        {"max_rules", prompt.max_rules},
        {"rule_count_mean", prompt.rule_count_mean},
        {"rule_count_sigma", prompt.rule_count_sigma},
        {"example_count", prompt.example_count},
        {"template_id", prompt.template_id}}},
      {"train", {{"alpha", train.alpha}, {"unk_threshold", train.unk_threshold}}},
      {"parse_mode", to_string(parse_mode)},
      {"fold_reference", fold_reference},
      {"revalidate", revalidate},
      {"eval",
       {{"punct", to_string(eval.punct)}, {"include_pos", eval.include_pos}, {"include_root", eval.include_root}}},
      {"seeds", seeds},
      {"generator", generator},
      {"inputs", inputs},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.pool_size = j.value("pool_size", c.pool_size);
    c.sentences_per_request = j.value("sentences_per_request", c.sentences_per_request);
    c.max_requests = j.value("max_requests", c.max_requests);
    c.criterion.kind = parse_criterion(j.value("criterion", std::string("csrs")));
    c.criterion.k = j.value("k", c.criterion.k);
    c.criterion.prefilter_multiplier = j.value("prefilter_multiplier", c.criterion.prefilter_multiplier);
    c.criterion.combine = j.value("combine", c.criterion.combine);
    c.criterion.weight = j.value("combine_weight", c.criterion.weight);
    c.criterion.rule_options.include_punct = j.value("include_punct_rules", true);
    if (j.contains("prompt")) {
      const auto& p = j["prompt"];
      c.prompt.length_sigma = p.value("length_sigma", c.prompt.length_sigma);
      c.prompt.max_rules = p.value("max_rules", c.prompt.max_rules);
      c.prompt.rule_count_mean = p.value("rule_count_mean", c.prompt.rule_count_mean);
      c.prompt.rule_count_sigma = p.value("rule_count_sigma", c.prompt.rule_count_sigma);
      c.prompt.example_count = p.value("example_count", c.prompt.example_count);
      c.prompt.template_id = p.value("template_id", c.prompt.template_id);
    }
    if (j.contains("train")) {
      c.train.alpha = j["train"].value("alpha", c.train.alpha);
      c.train.unk_threshold = j["train"].value("unk_threshold", c.train.unk_threshold);
    }
    c.parse_mode = parse_mode_name(j.value("parse_mode", std::string("direct")));
    c.fold_reference = j.value("fold_reference", false);
    c.revalidate = j.value("revalidate", false);
    if (j.contains("eval")) {
      c.eval.punct = parse_punct_mode(j["eval"].value("punct", std::string("include")));
      c.eval.include_pos = j["eval"].value("include_pos", false);
      c.eval.include_root = j["eval"].value("include_root", false);
    }
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.jobs = j.value("jobs", 1u);
    c.generator = j.value("generator", nlohmann::json::object());
    c.inputs = j.value("inputs", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json IterationRecord::to_json() const {
  return {{"iteration", iteration},
          {"seed", seed},
          {"pool_size", pool_size},
          {"k", k},
          {"criterion", criterion},
          {"selected_ids", selected_ids},
          {"train_size", train_size},
          {"dev_f1_source", dev_f1_source},
          {"dev_f1_target", dev_f1_target},
          {"failed_requests", failed_requests},
          {"fallback_parses", fallback_parses}};
}

IterationRecord IterationRecord::from_json(const nlohmann::json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration");
  r.seed = j.at("seed");
  r.pool_size = j.at("pool_size");
  r.k = j.at("k");
  r.criterion = j.at("criterion");
  r.selected_ids = j.at("selected_ids").get<std::vector<std::size_t>>();
  r.train_size = j.at("train_size");
  r.dev_f1_source = j.at("dev_f1_source");
  r.dev_f1_target = j.at("dev_f1_target");
  r.failed_requests = j.value("failed_requests", std::size_t{0});
  r.fallback_parses = j.value("fallback_parses", std::size_t{0});
  return r;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json its = nlohmann::json::array();
  for (const auto& r : iterations) its.push_back(r.to_json());
  return {{"schema", "sps-run-manifest"}, {"version", kVersion}, {"seed", seed},         {"status", status},
          {"config", config},             {"iterations", its},     {"artifacts", artifacts}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema") != "sps-run-manifest" || j.at("version") != kVersion)
      throw Error(Errc::config, "unsupported manifest schema");
    RunManifest m;
    m.config = j.at("config");
    m.seed = j.at("seed");
    m.status = j.at("status");
    for (const auto& r : j.at("iterations")) m.iterations.push_back(IterationRecord::from_json(r));
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, std::string("manifest: ") + e.what());
  }
}

RunManifest run(const RunConfig& config, const RunData& data, const GeneratorBackend& generator,
                const ParserBackend& backend, std::uint64_t seed, const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  if (data.source.empty()) throw Error(Errc::empty_treebank, "source treebank is empty");
  if (data.target_dev.empty() || data.source_dev.empty())
    throw Error(Errc::empty_corpus, "both source and target dev sets are required");
  if (config.parse_mode == ParseMode::mapping && (!data.constituency_parser || !data.mapping))
    throw Error(Errc::config, "mapping parse mode needs a constituency parser and a mapping table");

  // Held-out sentences must never reach prompts or the training data.
  std::unordered_set<std::uint64_t> held_out;
  for (const auto* dev : {&data.source_dev, &data.target_dev})
    for (const auto& t : *dev) held_out.insert(sentence_hash(t.tokens()));
  const std::vector<std::uint64_t> exclude(held_out.begin(), held_out.end());
  std::vector<Sentence> examples;
  for (const auto& s : data.target_examples)
    if (!held_out.count(sentence_hash(s))) examples.push_back(s);
  if (examples.size() < data.target_examples.size())
    spdlog::warn("dropped {} target examples that appear in a dev set", data.target_examples.size() - examples.size());
  if (config.iterations > 0 && examples.empty()) throw Error(Errc::invalid_argument, "empty example pool");

  const SourceStats stats = SourceStats::of(data.source);
  TrainConfig tcfg = config.train;
  tcfg.inventory = nullptr;

  RunManifest manifest;
  manifest.config = config.snapshot();
  manifest.seed = seed;

  std::vector<ParseTree> pseudo;  // accepted pseudo-trees, in acceptance order
  std::size_t start_iter = 0;
  const auto manifest_path = out_dir ? std::optional(*out_dir / "manifest.json") : std::nullopt;
  if (manifest_path && std::filesystem::exists(*manifest_path) && !config.revalidate) {
    RunManifest prev = RunManifest::from_json(read_json(*manifest_path));
    if (prev.config == manifest.config && prev.seed == seed && !prev.iterations.empty()) {
      for (const auto& r : prev.iterations) {
        if (r.iteration == 0) continue;
        auto trees = read_treebank(*out_dir / ("iter_" + std::to_string(r.iteration)) / "selected.txt");
        pseudo.insert(pseudo.end(), trees.begin(), trees.end());
      }
      manifest = prev;
      start_iter = prev.iterations.size();
      if (prev.status == "complete" && start_iter == config.iterations + 1) return prev;
      spdlog::info("resuming seed {} at iteration {}", seed, start_iter);
    }
  }
  if (out_dir) std::filesystem::create_directories(*out_dir);
  auto persist = [&] {
    if (manifest_path) write_json_atomic(*manifest_path, manifest.to_json());
  };

  auto train = [&](std::size_t iter) {
    return std::shared_ptr<const Parser>(
        backend.train(concat(data.source, pseudo), tcfg, derive_seed(seed, "train", iter)));
  };

  std::shared_ptr<const Parser> parser;
  try {
    parser = train(start_iter == 0 ? 0 : start_iter - 1);
    if (start_iter == 0) {
      IterationRecord r;
      r.seed = derive_seed(seed, "iteration", 0);
      r.criterion = sps::to_string(config.criterion.kind);
      r.train_size = data.source.size();
      r.dev_f1_source = dev_f1(*parser, data.source_dev, config.eval, config.jobs);
      r.dev_f1_target = dev_f1(*parser, data.target_dev, config.eval, config.jobs);
      manifest.iterations.push_back(r);
      persist();
      spdlog::info("seed {} iteration 0: train {} source F1 {:.2f} target F1 {:.2f}", seed, r.train_size,
                   r.dev_f1_source, r.dev_f1_target);
      start_iter = 1;
    }

    for (std::size_t iter = start_iter; iter <= config.iterations; ++iter) {
      IterationRecord r;
      r.iteration = iter;
      r.seed = derive_seed(seed, "iteration", iter);
      r.k = config.criterion.k;
      r.criterion = sps::to_string(config.criterion.kind);

      const auto train_set = concat(data.source, pseudo);
      const Counts prompt_rules = rule_counts(train_set, config.criterion.rule_options);
      Pool pool = generate_pool(generator, stats, examples, prompt_rules, config.prompt,
                                {config.pool_size, config.sentences_per_request, config.max_requests}, r.seed, exclude);
      r.pool_size = pool.sentences.size();
      r.failed_requests = pool.failed_requests;

      std::shared_ptr<const Parser> labeler = parser;
      if (config.parse_mode == ParseMode::mapping)
        labeler = std::make_shared<MappingParser>(data.constituency_parser, *data.mapping, data.inventory);
      std::vector<std::optional<PseudoTree>> parsed(pool.sentences.size());
      parallel_for(pool.sentences.size(), config.jobs,
                   [&](std::size_t i) { parsed[i] = labeler->parse(pool.sentences[i]); });
      std::vector<PseudoTree> candidates;
      candidates.reserve(parsed.size());
      for (auto& p : parsed) {
        r.fallback_parses += p->fallback;
        candidates.push_back(std::move(*p));
      }

      References refs;
      const auto& ref_source = config.fold_reference ? train_set : data.source;
      refs.source_tokens.emplace(token_counts(ref_source));
      refs.source_rules.emplace(rule_counts(ref_source, config.criterion.rule_options));
      if (!data.converted_target.empty()) {
        Counts target = rule_counts(data.converted_target, config.criterion.rule_options);
        if (config.fold_reference) target += rule_counts(pseudo, config.criterion.rule_options);
        refs.target_rules.emplace(std::move(target));
      }

      const auto scored = score(candidates, config.criterion, refs, config.jobs);
      r.selected_ids = select_top_k(scored, candidates, config.criterion);
      std::vector<ParseTree> chosen;
      for (std::size_t idx : r.selected_ids) chosen.push_back(candidates[idx].tree);
      pseudo.insert(pseudo.end(), chosen.begin(), chosen.end());

      if (config.revalidate) {
        for (auto& t : pseudo) t = parser->parse(t.tokens()).tree;
      }

      parser = train(iter);
      r.train_size = data.source.size() + pseudo.size();
      r.dev_f1_source = dev_f1(*parser, data.source_dev, config.eval, config.jobs);
      r.dev_f1_target = dev_f1(*parser, data.target_dev, config.eval, config.jobs);

      if (out_dir) {
        const std::string dir = "iter_" + std::to_string(iter);
        std::filesystem::create_directories(*out_dir / dir);
        write_batch(*out_dir / dir / "pool.txt", pool.sentences, pool.provenance);
        write_selection(*out_dir / dir / "selected.txt", candidates, scored, r.selected_ids, config.criterion.kind);
        for (const char* f : {"pool.txt", "pool.txt.provenance.json", "selected.txt", "selected.txt.scores.tsv"})
          manifest.artifacts.push_back(dir + "/" + f);
      }
      manifest.iterations.push_back(r);
      persist();
      spdlog::info("seed {} iteration {}: pool {} selected {} train {} source F1 {:.2f} target F1 {:.2f}", seed, iter,
                   r.pool_size, r.selected_ids.size(), r.train_size, r.dev_f1_source, r.dev_f1_target);
    }
  } catch (...) {
    manifest.status = "aborted";
    persist();
    throw;
  }
  manifest.status = "complete";
  persist();
  return manifest;
}

nlohmann::json AggregateReport::to_json() const {
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& m : runs) {
    nlohmann::json t = nlohmann::json::array(), s = nlohmann::json::array();
    for (const auto& r : m.iterations) {
      t.push_back(r.dev_f1_target);
      s.push_back(r.dev_f1_source);
    }
    per_seed.push_back({{"seed", m.seed}, {"target_f1", t}, {"source_f1", s}});
  }
  return {{"seeds", seeds},
          {"mean_target_f1", mean_target_f1},
          {"mean_source_f1", mean_source_f1},
          {"runs", per_seed},
          {"failures", failures}};
}

AggregateReport run_multiseed(const RunConfig& config, const RunData& data, const GeneratorBackend& generator,
                              const ParserBackend& backend, const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  AggregateReport agg;
  agg.seeds = config.seeds;
  std::exception_ptr first_error;
  for (auto seed : config.seeds) {
    try {
      std::optional<std::filesystem::path> dir;
      if (out_dir) dir = *out_dir / ("seed_" + std::to_string(seed));
      agg.runs.push_back(run(config, data, generator, backend, seed, dir));
    } catch (const std::exception& e) {
      if (!first_error) first_error = std::current_exception();
      agg.failures.push_back(std::to_string(seed) + ": " + e.what());
      spdlog::warn("seed {} aborted: {}", seed, e.what());
    }
  }
  if (agg.runs.empty() && first_error) std::rethrow_exception(first_error);
  if (!agg.failures.empty()) spdlog::warn("aggregating {} of {} seeds", agg.runs.size(), config.seeds.size());

  const std::size_t n_iter = config.iterations + 1;
  agg.mean_target_f1.assign(n_iter, 0.0);
  agg.mean_source_f1.assign(n_iter, 0.0);
  for (const auto& m : agg.runs)
    for (std::size_t i = 0; i < n_iter && i < m.iterations.size(); ++i) {
      agg.mean_target_f1[i] += m.iterations[i].dev_f1_target / static_cast<double>(agg.runs.size());
      agg.mean_source_f1[i] += m.iterations[i].dev_f1_source / static_cast<double>(agg.runs.size());
    }
  if (out_dir) write_json_atomic(*out_dir / "aggregate.json", agg.to_json());
  return agg;
}

std::unique_ptr<GeneratorBackend> make_generator(const nlohmann::json& section,
                                                 const std::filesystem::path& base_dir) {
  const std::string kind = section.value("kind", std::string("mock"));
  auto resolve = [&](const std::string& p) {
    return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base_dir / p;
  };
  if (kind == "mock") {
    if (!section.contains("grammar")) throw Error(Errc::config, "mock generator needs a grammar path");
    MockConfig mc;
    mc.adherence_target = section.value("adherence_target", mc.adherence_target);
    mc.length_tolerance = section.value("length_tolerance", mc.length_tolerance);
    mc.max_attempts = section.value("max_attempts", mc.max_attempts);
    return std::make_unique<MockGenerator>(Grammar::load(resolve(section["grammar"].get<std::string>())), mc);
  }
  if (kind == "service") {
    nlohmann::json sc = section;
    if (sc.contains("lexicon")) sc["lexicon"] = resolve(sc["lexicon"].get<std::string>()).string();
    PromptTemplate tmpl = section.contains("template")
                              ? PromptTemplate::load(resolve(section["template"].get<std::string>()))
                              : PromptTemplate::builtin();
    return std::make_unique<ServiceGenerator>(ServiceConfig::from_json(sc), std::move(tmpl));
  }
  throw Error(Errc::config, "unknown generator kind '" + kind + "'");
}

LoadedRun load_run(const std::filesystem::path& config_path) {
  const nlohmann::json j = read_json(config_path);
  const auto base = config_path.parent_path();
  LoadedRun lr;
  lr.config = RunConfig::from_json(j);
  const auto& in = lr.config.inputs;
  auto path_of = [&](const char* key) -> std::optional<std::filesystem::path> {
    if (!in.contains(key)) return std::nullopt;
    std::filesystem::path p = in[key].get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  auto required = [&](const char* key) {
    auto p = path_of(key);
    if (!p) throw Error(Errc::config, std::string("run config lacks inputs.") + key);
    return *p;
  };

  if (auto p = path_of("inventory")) lr.data.inventory = LabelInventory::load(*p);
  const LabelInventory* inv = &lr.data.inventory;
  lr.data.source = read_treebank(required("source"), inv);
  lr.data.source_dev = read_treebank(required("source_dev"), inv);
  lr.data.target_dev = read_treebank(required("target_dev"), inv);
  lr.data.target_examples = read_sentences(required("target_examples"));
  if (auto p = path_of("converted_target")) lr.data.converted_target = read_treebank(*p, inv);
  if (lr.config.parse_mode == ParseMode::mapping) {
    auto constituency = read_treebank(required("constituency_treebank"));
    lr.data.constituency_parser = std::make_shared<PcfgModel>(PcfgModel::train(constituency, lr.config.train));
    lr.data.mapping = MappingTable::load(required("mapping_table"), inv);
  }
  lr.generator = make_generator(lr.config.generator, base);
  lr.backend = std::make_unique<PcfgBackend>();
  return lr;
}

}  // namespace sps
