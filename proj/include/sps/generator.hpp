#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sps/grammar.hpp"
#include "sps/random.hpp"
#include "sps/rules.hpp"
#include "sps/segmentation.hpp"
#include "sps/tree.hpp"

namespace sps {

struct SourceStats {
  double mean_length = 0.0;
  double stddev_length = 0.0;

  static SourceStats of(const std::vector<ParseTree>& trees);
  static SourceStats of(const std::vector<Sentence>& sentences);
};

/// One generation request: sampled rules, target-domain examples and a
/// length constraint. [min_length, max_length] are the hard clamp bounds
/// every emitted sentence must respect.
struct PromptSpec {
  std::vector<SyntacticRule> rules;
  std::vector<Sentence> examples;
  std::size_t target_length = 0;
  std::size_t rule_count = 0;
  std::size_t min_length = 2;
  std::size_t max_length = 0;
  std::string template_id = "default";

  void validate() const;
};

struct PromptConfig {
  double length_sigma = -1.0;  // negative: 0.25 * mean length
  std::size_t max_rules = 6;
  double rule_count_mean = -1.0;  // negative: max_rules / 2
  double rule_count_sigma = -1.0;  // negative: 0.25 * rule_count_mean
  std::size_t example_count = 3;
  std::string template_id = "default";
};

/// Draws a PromptSpec. The target length is round(Normal(mean, sigma))
/// clamped to [2, 3 * mean]; the rule count uses the same mechanism clamped
/// to [1, max_rules]; rules are drawn without replacement with probability
/// proportional to their corpus frequency.
PromptSpec sample_prompt(const SourceStats& stats, const std::vector<Sentence>& target_examples,
                         const Counts& rule_pool, const PromptConfig& config, Rng& rng);

/// Template text with {{rules}}, {{examples}}, {{length}}, {{rule_count}}
/// and {{count}} placeholders.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text, std::string id = "default");
  static PromptTemplate load(const std::filesystem::path& path);
  static PromptTemplate builtin();

  std::string render(const PromptSpec& spec, std::size_t count) const;
  const std::string& id() const noexcept { return id_; }

 private:
  std::string text_;
  std::string id_;
};

struct Provenance {
  std::string prompt_hash;
  std::string backend_id;
  std::uint64_t seed = 0;
};

struct GenerationBatch {
  std::vector<Sentence> sentences;
  Provenance provenance;
  /// Mock only: whether each sentence's derivation used a prompted rule.
  std::vector<bool> adheres;
  /// Mock only: the derivation of each sentence.
  std::vector<ParseTree> derivations;
};

class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;
  /// Throws Errc::empty_generation when nothing usable came back and
  /// ServiceError for exhausted retries.
  virtual GenerationBatch generate(const PromptSpec& spec, std::size_t count, std::uint64_t seed) const = 0;
  virtual std::string id() const = 0;
};

struct MockConfig {
  /// Share of sentences that are resampled until their derivation uses a
  /// prompted rule.
  double adherence_target = 0.7;
  double length_tolerance = 0.2;
  std::size_t max_attempts = 200;
};

/// Offline generator sampling a PCFG. Fully determined by (spec, count, seed).
class MockGenerator final : public GeneratorBackend {
 public:
  MockGenerator(Grammar grammar, MockConfig config = {});
  GenerationBatch generate(const PromptSpec& spec, std::size_t count, std::uint64_t seed) const override;
  std::string id() const override { return "mock-pcfg"; }

 private:
  Grammar grammar_;
  MockConfig config_;
};

/// Retriable failure of the generation service after `attempts` tries.
class ServiceError : public Error {
 public:
  ServiceError(const std::string& what, int attempts)
      : Error(Errc::service_unavailable, what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Client-side token bucket; acquire() blocks until a request may be sent.
class TokenBucket {
 public:
  explicit TokenBucket(double requests_per_minute);
  void acquire();

 private:
  double rate_per_sec_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

struct ServiceConfig {
  std::string endpoint;                     // e.g. http://127.0.0.1:8080/v1/complete
  std::string token_env = "SPS_GEN_TOKEN";  // bearer token variable; unset means no auth header
  int max_tokens = 1024;
  double temperature = 0.7;
  bool send_seed = true;
  int max_attempts = 3;
  int backoff_ms = 500;
  int timeout_s = 60;
  double requests_per_minute = 60.0;
  std::string tokenizer = "whitespace";  // whitespace | chars | maxmatch
  std::optional<Lexicon> lexicon;        // for maxmatch

  static ServiceConfig from_json(const nlohmann::json& j);
};

/// HTTP completion client: POST {prompt, max_tokens, temperature, seed?},
/// reply {text}; the text is split into one sentence per line and tokenized.
class ServiceGenerator final : public GeneratorBackend {
 public:
  ServiceGenerator(ServiceConfig config, PromptTemplate tmpl);
  GenerationBatch generate(const PromptSpec& spec, std::size_t count, std::uint64_t seed) const override;
  std::string id() const override { return "service"; }

  /// Splits a completion into tokenized sentences, dropping list markers
  /// and blank lines.
  std::vector<Sentence> split_reply(const std::string& text) const;

 private:
  ServiceConfig config_;
  PromptTemplate template_;
  mutable TokenBucket bucket_;
};

/// Requests batches until `pool_size` sentences are collected. Failed
/// requests are logged and skipped; the pool may come back short, and the
/// number of requests is capped so a dead service cannot stall the caller.
struct PoolRequest {
  std::size_t pool_size = 0;
  std::size_t sentences_per_request = 10;
  std::size_t max_requests = 0;  // 0: 3 * ceil(pool_size / sentences_per_request)
};

struct Pool {
  std::vector<Sentence> sentences;
  std::vector<Provenance> provenance;  // parallel to sentences
  std::vector<bool> adheres;           // mock only, parallel to sentences
  std::size_t failed_requests = 0;
};

/// `exclude` holds fnv1a hashes of joined sentences that must never enter
/// the pool (held-out evaluation data).
Pool generate_pool(const GeneratorBackend& backend, const SourceStats& stats,
                   const std::vector<Sentence>& target_examples, const Counts& rule_pool,
                   const PromptConfig& prompt_config, const PoolRequest& request, std::uint64_t seed,
                   const std::vector<std::uint64_t>& exclude = {});

std::uint64_t sentence_hash(const Sentence& s);

/// Persists a batch as one sentence per line plus a JSON provenance sidecar
/// (`<path>.provenance.json`).
void write_batch(const std::filesystem::path& path, const std::vector<Sentence>& sentences,
                 const std::vector<Provenance>& provenance);

}  // namespace sps
