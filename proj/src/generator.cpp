#include "sps/generator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "sps/io.hpp"

namespace sps {

namespace {

template <class Seq>
std::pair<double, double> mean_std(const Seq& lengths) {
  if (lengths.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : lengths) sum += x;
  const double mean = sum / static_cast<double>(lengths.size());
  double ss = 0.0;
  for (double x : lengths) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(lengths.size()))};
}

long clamped_gaussian(Rng& rng, double mean, double sigma, long lo, long hi) {
  const double draw = sigma > 0.0 ? mean + sigma * standard_normal(rng) : mean;
  const long v = std::lround(draw);
  return std::clamp(v, lo, hi);
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

std::set<std::string> rule_strings(const ParseTree& tree) {
  std::set<std::string> out;
  for (const auto& r : extract_rules(tree)) out.insert(r.to_string());
  return out;
}

}  // namespace

SourceStats SourceStats::of(const std::vector<ParseTree>& trees) {
  std::vector<double> lengths;
  for (const auto& t : trees) lengths.push_back(static_cast<double>(t.size()));
  auto [m, s] = mean_std(lengths);
  return {m, s};
}

SourceStats SourceStats::of(const std::vector<Sentence>& sentences) {
  std::vector<double> lengths;
  for (const auto& t : sentences) lengths.push_back(static_cast<double>(t.size()));
  auto [m, s] = mean_std(lengths);
  return {m, s};
}

void PromptSpec::validate() const {
  if (rules.empty() || rule_count != rules.size())
    throw Error(Errc::invalid_argument, "prompt needs rule_count == |rules| >= 1");
  if (target_length < 2) throw Error(Errc::invalid_argument, "prompt target length must be at least 2");
  if (examples.empty()) throw Error(Errc::invalid_argument, "prompt needs at least one example sentence");
  if (max_length < min_length) throw Error(Errc::invalid_argument, "prompt length bounds are inverted");
}

PromptSpec sample_prompt(const SourceStats& stats, const std::vector<Sentence>& target_examples,
                         const Counts& rule_pool, const PromptConfig& config, Rng& rng) {
  if (target_examples.empty()) throw Error(Errc::invalid_argument, "empty example pool");
  if (rule_pool.empty()) throw Error(Errc::invalid_argument, "empty rule pool");
  if (config.max_rules < 1) throw Error(Errc::config, "max_rules must be at least 1");
  if (!(stats.mean_length > 0.0)) throw Error(Errc::invalid_argument, "source mean length must be positive");

  PromptSpec spec;
  spec.template_id = config.template_id;
  spec.min_length = 2;
  spec.max_length = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(3.0 * stats.mean_length)));

  const double len_sigma = config.length_sigma >= 0.0 ? config.length_sigma : 0.25 * stats.mean_length;
  spec.target_length = static_cast<std::size_t>(clamped_gaussian(
      rng, stats.mean_length, len_sigma, static_cast<long>(spec.min_length), static_cast<long>(spec.max_length)));

  const auto distinct = rule_pool.items().size();
  const long max_rules = static_cast<long>(std::min(config.max_rules, distinct));
  const double rc_mean = config.rule_count_mean > 0.0 ? config.rule_count_mean : config.max_rules / 2.0;
  const double rc_sigma = config.rule_count_sigma >= 0.0 ? config.rule_count_sigma : 0.25 * rc_mean;
  spec.rule_count = static_cast<std::size_t>(clamped_gaussian(rng, rc_mean, rc_sigma, 1, max_rules));

  std::vector<std::string> names;
  std::vector<double> weights;
  for (const auto& [item, n] : rule_pool.items()) {
    names.push_back(item);
    weights.push_back(static_cast<double>(n));
  }
  for (std::size_t i = 0; i < spec.rule_count; ++i) {
    const std::size_t pick = weighted_choice(weights, rng);
    spec.rules.push_back(SyntacticRule::parse(names[pick]));
    weights[pick] = 0.0;
  }

  std::vector<std::size_t> order(target_examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t n_examples = std::min(std::max<std::size_t>(config.example_count, 1), order.size());
  for (std::size_t i = 0; i < n_examples; ++i) {
    const std::size_t j = i + uniform_index(rng, order.size() - i);
    std::swap(order[i], order[j]);
    spec.examples.push_back(target_examples[order[i]]);
  }
  return spec;
}

PromptTemplate::PromptTemplate(std::string text, std::string id) : text_(std::move(text)), id_(std::move(id)) {
  if (text_.find("{{rules}}") == std::string::npos || text_.find("{{examples}}") == std::string::npos ||
      text_.find("{{length}}") == std::string::npos)
    throw Error(Errc::config, "prompt template must contain {{rules}}, {{examples}} and {{length}}");
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  try {
    return PromptTemplate(read_file(path), path.stem().string());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

PromptTemplate PromptTemplate::builtin() {
  return PromptTemplate(
      "Write {{count}} new sentences, one per line, numbered.\n"
      "Each sentence should be about {{length}} words long and use the following {{rule_count}} "
      "grammar rules, written as parent -> children:\n"
      "{{rules}}\n"
      "Match the style and topic of these example sentences:\n"
      "{{examples}}\n"
      "Separate words with single spaces. Output only the sentences.\n",
      "default");
}

std::string PromptTemplate::render(const PromptSpec& spec, std::size_t count) const {
  std::string rules, examples;
  for (const auto& r : spec.rules) rules += "- " + r.to_string() + "\n";
  for (std::size_t i = 0; i < spec.examples.size(); ++i)
    examples += std::to_string(i + 1) + ". " + join_tokens(spec.examples[i]) + "\n";
  if (!rules.empty()) rules.pop_back();
  if (!examples.empty()) examples.pop_back();
  std::string out = text_;
  replace_all(out, "{{rules}}", rules);
  replace_all(out, "{{examples}}", examples);
  replace_all(out, "{{length}}", std::to_string(spec.target_length));
  replace_all(out, "{{rule_count}}", std::to_string(spec.rule_count));
  replace_all(out, "{{count}}", std::to_string(count));
  return out;
}

MockGenerator::MockGenerator(Grammar grammar, MockConfig config) : grammar_(std::move(grammar)), config_(config) {
  if (config_.adherence_target < 0.0 || config_.adherence_target > 1.0)
    throw Error(Errc::config, "adherence_target must lie in [0, 1]");
  if (config_.max_attempts < 1) throw Error(Errc::config, "max_attempts must be at least 1");
}

GenerationBatch MockGenerator::generate(const PromptSpec& spec, std::size_t count, std::uint64_t seed) const {
  spec.validate();
  std::set<std::string> prompted;
  for (const auto& r : spec.rules) prompted.insert(r.to_string());

  const double t = static_cast<double>(spec.target_length);
  const std::size_t lo = std::max(spec.min_length, static_cast<std::size_t>(std::ceil(t * (1.0 - config_.length_tolerance))));
  const std::size_t hi = std::min(spec.max_length, static_cast<std::size_t>(std::floor(t * (1.0 + config_.length_tolerance))));

  GenerationBatch batch;
  batch.provenance = {hex64(fnv1a(PromptTemplate::builtin().render(spec, count))), id(), seed};
  Rng rng(seed);
  for (std::size_t n = 0; n < count; ++n) {
    const bool want_rule = uniform01(rng) < config_.adherence_target;
    std::optional<ParseTree> chosen, in_bounds;
    bool chosen_adheres = false, in_bounds_adheres = false;
    for (std::size_t attempt = 0; attempt < config_.max_attempts && !chosen; ++attempt) {
      std::optional<ParseTree> sampled;
      try {
        sampled = grammar_.sample(rng);
      } catch (const Error&) {
        continue;  // runaway recursion, draw again
      }
      ParseTree tree = std::move(*sampled);
      const std::size_t len = tree.size();
      if (len < spec.min_length || len > spec.max_length) continue;
      bool adheres = false;
      for (const auto& r : rule_strings(tree))
        if (prompted.count(r)) {
          adheres = true;
          break;
        }
      const bool in_window = len >= lo && len <= hi;
      if (in_window && (adheres || !want_rule)) {
        chosen = std::move(tree);
        chosen_adheres = adheres;
      } else if (!in_bounds || (adheres && !in_bounds_adheres)) {
        in_bounds = std::move(tree);
        in_bounds_adheres = adheres;
      }
    }
    if (!chosen && in_bounds) {
      chosen = std::move(in_bounds);
      chosen_adheres = in_bounds_adheres;
    }
    if (!chosen) continue;
    batch.sentences.push_back(chosen->tokens());
    batch.adheres.push_back(chosen_adheres);
    batch.derivations.push_back(std::move(*chosen));
  }
  if (batch.sentences.empty()) throw Error(Errc::empty_generation, "mock generator produced no sentence within the length bounds");
  return batch;
}

std::uint64_t sentence_hash(const Sentence& s) { return fnv1a(join_tokens(s)); }

Pool generate_pool(const GeneratorBackend& backend, const SourceStats& stats,
                   const std::vector<Sentence>& target_examples, const Counts& rule_pool,
                   const PromptConfig& prompt_config, const PoolRequest& request, std::uint64_t seed,
                   const std::vector<std::uint64_t>& exclude) {
  if (request.sentences_per_request < 1) throw Error(Errc::config, "sentences_per_request must be at least 1");
  const std::unordered_set<std::uint64_t> excluded(exclude.begin(), exclude.end());
  const std::size_t max_requests =
      request.max_requests > 0
          ? request.max_requests
          : 3 * ((request.pool_size + request.sentences_per_request - 1) / request.sentences_per_request) + 1;

  Pool pool;
  Rng prompt_rng = make_rng(seed, "prompt");
  std::size_t dropped = 0;
  for (std::size_t req = 0; req < max_requests && pool.sentences.size() < request.pool_size; ++req) {
    const PromptSpec spec = sample_prompt(stats, target_examples, rule_pool, prompt_config, prompt_rng);
    const std::size_t want = std::min(request.sentences_per_request, request.pool_size - pool.sentences.size());
    const std::uint64_t batch_seed = derive_seed(seed, "generate", req);
    try {
      GenerationBatch batch = backend.generate(spec, want, batch_seed);
      for (std::size_t i = 0; i < batch.sentences.size() && pool.sentences.size() < request.pool_size; ++i) {
        if (excluded.count(sentence_hash(batch.sentences[i]))) {
          ++dropped;
          continue;
        }
        pool.sentences.push_back(std::move(batch.sentences[i]));
        pool.provenance.push_back(batch.provenance);
        pool.adheres.push_back(i < batch.adheres.size() && batch.adheres[i]);
      }
    } catch (const ServiceError& e) {
      ++pool.failed_requests;
      spdlog::warn("generation request {} failed after {} attempts: {}", req, e.attempts(), e.what());
    } catch (const Error& e) {
      if (e.code() != Errc::empty_generation) throw;
      ++pool.failed_requests;
      spdlog::warn("generation request {} skipped: {}", req, e.what());
    }
  }
  if (dropped > 0) spdlog::info("dropped {} generated sentences that collide with held-out data", dropped);
  if (pool.sentences.size() < request.pool_size)
    spdlog::warn("generation pool short: {} of {} sentences ({} failed requests)", pool.sentences.size(),
                 request.pool_size, pool.failed_requests);
  return pool;
}

void write_batch(const std::filesystem::path& path, const std::vector<Sentence>& sentences,
                 const std::vector<Provenance>& provenance) {
  if (provenance.size() != sentences.size())
    throw Error(Errc::invalid_argument, "provenance must be parallel to sentences");
  write_sentences(path, sentences);
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t i = 0; i < sentences.size(); ++i)
    j.push_back({{"line", i + 1},
                 {"prompt_hash", provenance[i].prompt_hash},
                 {"backend", provenance[i].backend_id},
                 {"seed", provenance[i].seed}});
  write_json_atomic(path.string() + ".provenance.json", j);
}

}  // namespace sps
