#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sps/eval.hpp"
#include "sps/generator.hpp"
#include "sps/mapping.hpp"
#include "sps/parser.hpp"
#include "sps/selection.hpp"

namespace sps {

enum class ParseMode {
  direct,   // the SPS parser trained in the loop labels the pool
  mapping,  // a fixed constituency parser plus a mapping table labels the pool
};

struct RunConfig {
  std::size_t iterations = 4;
  std::size_t pool_size = 10000;
  std::size_t sentences_per_request = 10;
  std::size_t max_requests = 0;
  CriterionConfig criterion{CriterionKind::csrs, 2000, 2, "staged", 0.5, {}};
  PromptConfig prompt;
  TrainConfig train;
  ParseMode parse_mode = ParseMode::direct;
  /// Fold accepted pseudo-trees into the selection reference each iteration.
  bool fold_reference = false;
  /// Re-parse every accepted pseudo-tree with the current parser before retraining.
  bool revalidate = false;
  EvalOptions eval;
  std::vector<std::uint64_t> seeds{1};
  unsigned jobs = 1;
  /// Generator section and input paths as given, kept for the manifest.
  nlohmann::json generator = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();

  void validate() const;
  /// Everything that determines results (jobs is left out).
  nlohmann::json snapshot() const;
  static RunConfig from_json(const nlohmann::json& j);
};

struct RunData {
  std::vector<ParseTree> source;
  std::vector<ParseTree> source_dev;
  std::vector<ParseTree> target_dev;
  std::vector<Sentence> target_examples;
  /// Target-domain trees converted from another formalism; needed by csrs kinds.
  std::vector<ParseTree> converted_target;
  /// Mapping mode only.
  std::shared_ptr<const Parser> constituency_parser;
  std::optional<MappingTable> mapping;
  LabelInventory inventory = LabelInventory::default_inventory();
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::uint64_t seed = 0;
  std::size_t pool_size = 0;
  std::size_t k = 0;
  std::string criterion;
  std::vector<std::size_t> selected_ids;  // indices into the iteration's pool
  std::size_t train_size = 0;
  double dev_f1_source = 0.0;
  double dev_f1_target = 0.0;
  std::size_t failed_requests = 0;
  std::size_t fallback_parses = 0;

  nlohmann::json to_json() const;
  static IterationRecord from_json(const nlohmann::json& j);
};

struct RunManifest {
  static constexpr int kVersion = 1;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string status = "running";  // running | complete | aborted
  std::vector<IterationRecord> iterations;
  std::vector<std::string> artifacts;  // relative to the run directory

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// One self-training run for `seed`. When `out_dir` is given the manifest
/// (`manifest.json`) and per-iteration artifacts are written there after
/// every iteration, and a previous run with the same config is resumed from
/// its last completed iteration.
RunManifest run(const RunConfig& config, const RunData& data, const GeneratorBackend& generator,
                const ParserBackend& backend, std::uint64_t seed,
                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct AggregateReport {
  std::vector<std::uint64_t> seeds;
  std::vector<RunManifest> runs;
  std::vector<double> mean_target_f1;  // per iteration
  std::vector<double> mean_source_f1;
  std::vector<std::string> failures;   // seeds whose run aborted

  nlohmann::json to_json() const;
};

/// Runs every seed in `config.seeds` into `<out_dir>/seed_<s>` and writes
/// `<out_dir>/aggregate.json`. A failed seed is reported and left out of
/// the means; if every seed fails the first error is rethrown.
AggregateReport run_multiseed(const RunConfig& config, const RunData& data, const GeneratorBackend& generator,
                              const ParserBackend& backend,
                              const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Everything a run config file names, loaded and ready.
struct LoadedRun {
  RunConfig config;
  RunData data;
  std::unique_ptr<GeneratorBackend> generator;
  std::unique_ptr<ParserBackend> backend;
};

/// Reads a run config file; relative paths resolve against its directory.
LoadedRun load_run(const std::filesystem::path& config_path);

/// Builds a generator from a config section: {"kind": "mock", "grammar": ...}
/// or {"kind": "service", "endpoint": ..., "template": ...}.
std::unique_ptr<GeneratorBackend> make_generator(const nlohmann::json& section, const std::filesystem::path& base_dir);

}  // namespace sps
