#include <set>

#include <gtest/gtest.h>

#include "synthetic.hpp"
#include "sps/io.hpp"
#include "sps/selftrain.hpp"

using namespace sps;

namespace {

struct Fixture {
  testkit::SyntheticSetup setup = testkit::make_synthetic(7, 150, 40);
  RunData data;
  MockGenerator gen{setup.target_grammar};
  PcfgBackend backend;

  Fixture() {
    data.source = setup.source_train;
    data.source_dev = setup.source_dev;
    data.target_dev = setup.target_dev;
    data.target_examples = setup.target_examples;
    data.converted_target = setup.converted_target;
  }
};

RunConfig small_config() {
  RunConfig c;
  c.iterations = 2;
  c.pool_size = 40;
  c.criterion.k = 10;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sps_selftrain_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::io;
}

}  // namespace

TEST(SelfTrain, ZeroIterationsIsBaselineOnly) {
  Fixture fx;
  RunConfig c = small_config();
  c.iterations = 0;
  const auto m = run(c, fx.data, fx.gen, fx.backend, 1);
  ASSERT_EQ(m.iterations.size(), 1u);
  EXPECT_EQ(m.iterations[0].train_size, fx.data.source.size());
  EXPECT_TRUE(m.iterations[0].selected_ids.empty());
  EXPECT_EQ(m.status, "complete");
}

TEST(SelfTrain, TrainSizeGrowsByK) {
  Fixture fx;
  RunConfig c = small_config();
  c.iterations = 3;
  const auto m = run(c, fx.data, fx.gen, fx.backend, 2);
  ASSERT_EQ(m.iterations.size(), 4u);
  std::size_t expected = fx.data.source.size();
  for (std::size_t i = 0; i < m.iterations.size(); ++i) {
    const auto& r = m.iterations[i];
    EXPECT_EQ(r.iteration, i);
    expected += r.selected_ids.size();
    EXPECT_EQ(r.train_size, expected);
    if (i > 0) {
      EXPECT_EQ(r.pool_size, 40u);
      EXPECT_EQ(r.selected_ids.size(), 10u);
      EXPECT_EQ(std::set<std::size_t>(r.selected_ids.begin(), r.selected_ids.end()).size(), 10u);
      for (auto id : r.selected_ids) EXPECT_LT(id, r.pool_size);
    }
  }
  EXPECT_EQ(m.iterations.back().train_size, fx.data.source.size() + 30);
}

TEST(SelfTrain, ReproducibleManifest) {
  Fixture fx;
  const auto a = scratch("repro_a"), b = scratch("repro_b");
  run(small_config(), fx.data, fx.gen, fx.backend, 5, a);
  run(small_config(), fx.data, fx.gen, fx.backend, 5, b);
  EXPECT_EQ(read_file(a / "manifest.json"), read_file(b / "manifest.json"));
  EXPECT_EQ(read_file(a / "iter_2" / "selected.txt"), read_file(b / "iter_2" / "selected.txt"));
  EXPECT_NE(run(small_config(), fx.data, fx.gen, fx.backend, 6).to_json(),
            run(small_config(), fx.data, fx.gen, fx.backend, 5).to_json());
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(SelfTrain, ResumeMatchesUninterruptedRun) {
  Fixture fx;
  const auto full = scratch("resume_full"), cut = scratch("resume_cut");
  const auto want = run(small_config(), fx.data, fx.gen, fx.backend, 9, full);
  run(small_config(), fx.data, fx.gen, fx.backend, 9, cut);

  // Simulate a crash after iteration 1.
  auto j = read_json(cut / "manifest.json");
  j["iterations"].erase(2);
  auto arts = j["artifacts"];
  j["artifacts"] = nlohmann::json(std::vector<std::string>(arts.begin(), arts.begin() + 4));
  j["status"] = "running";
  write_json_atomic(cut / "manifest.json", j);
  std::filesystem::remove_all(cut / "iter_2");

  const auto got = run(small_config(), fx.data, fx.gen, fx.backend, 9, cut);
  EXPECT_EQ(got.to_json(), want.to_json());
  EXPECT_EQ(read_file(cut / "manifest.json"), read_file(full / "manifest.json"));
  EXPECT_EQ(read_file(cut / "iter_2" / "selected.txt"), read_file(full / "iter_2" / "selected.txt"));

  // A complete run is returned as is.
  EXPECT_EQ(run(small_config(), fx.data, fx.gen, fx.backend, 9, cut).to_json(), want.to_json());
  std::filesystem::remove_all(full);
  std::filesystem::remove_all(cut);
}

TEST(SelfTrain, DevSentencesNeverLeak) {
  // A grammar with four possible sentences, two of which are held out.
  Grammar g({{"sps", 1.0}}, {{"sps", {"subject", "predicate"}, 1.0}, {"subject", {"n"}, 1.0}, {"predicate", {"v"}, 1.0}},
            {{"n", "我", 1.0}, {"n", "你", 1.0}, {"v", "走", 1.0}, {"v", "跑", 1.0}});
  MockGenerator gen(g, {0.7, 1.0, 200});
  const auto tree = [](const char* n, const char* v) {
    return parse_bracketed(std::string("(sps (subject (n ") + n + ")) (predicate (v " + v + ")))");
  };
  RunData data;
  data.source = {tree("你", "跑"), tree("我", "跑")};
  data.source_dev = {tree("我", "走")};
  data.target_dev = {tree("你", "走")};
  data.target_examples = {{"我", "走"}, {"你", "跑"}};
  RunConfig c;
  c.iterations = 2;
  c.pool_size = 5;
  c.max_requests = 20;
  c.criterion = {CriterionKind::srs, 3};
  c.prompt.length_sigma = 0;
  const auto dir = scratch("leak");
  run(c, data, gen, PcfgBackend{}, 3, dir);
  std::size_t seen = 0;
  for (std::size_t it = 1; it <= 2; ++it) {
    const auto pool = read_sentences(dir / ("iter_" + std::to_string(it)) / "pool.txt");
    for (const auto& s : pool) {
      EXPECT_NE(join_tokens(s), "我 走");
      EXPECT_NE(join_tokens(s), "你 走");
      ++seen;
    }
    for (const auto& t : read_treebank(dir / ("iter_" + std::to_string(it)) / "selected.txt")) {
      EXPECT_NE(join_tokens(t.tokens()), "我 走");
      EXPECT_NE(join_tokens(t.tokens()), "你 走");
    }
  }
  EXPECT_GT(seen, 0u);
  std::filesystem::remove_all(dir);
}

TEST(SelfTrain, ConfigErrors) {
  Fixture fx;
  RunConfig c = small_config();
  c.parse_mode = ParseMode::mapping;
  c.criterion.kind = CriterionKind::csrs_conf;
  EXPECT_EQ(code_of([&] { c.validate(); }), Errc::config);
  c.criterion.kind = CriterionKind::csrs;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(code_of([&] { run(c, fx.data, fx.gen, fx.backend, 1); }), Errc::config);

  RunData no_dev = fx.data;
  no_dev.target_dev.clear();
  EXPECT_EQ(code_of([&] { run(small_config(), no_dev, fx.gen, fx.backend, 1); }), Errc::empty_corpus);
  RunData no_source = fx.data;
  no_source.source.clear();
  EXPECT_EQ(code_of([&] { run(small_config(), no_source, fx.gen, fx.backend, 1); }), Errc::empty_treebank);
  RunData no_target = fx.data;
  no_target.converted_target.clear();
  EXPECT_EQ(code_of([&] { run(small_config(), no_target, fx.gen, fx.backend, 1); }), Errc::missing_reference);
}

TEST(SelfTrain, MappingModeRuns) {
  Fixture fx;
  std::vector<ParseTree> constituency;
  for (const auto& t : fx.data.source) constituency.push_back(testkit::to_constituency(t));
  fx.data.constituency_parser = std::make_shared<PcfgModel>(PcfgModel::train(constituency, {}));
  fx.data.mapping = testkit::constituency_to_sps();
  RunConfig c = small_config();
  c.iterations = 1;
  c.parse_mode = ParseMode::mapping;
  const auto m = run(c, fx.data, fx.gen, fx.backend, 4);
  ASSERT_EQ(m.iterations.size(), 2u);
  EXPECT_EQ(m.iterations[1].selected_ids.size(), 10u);
}

TEST(SelfTrain, MultiSeed) {
  Fixture fx;
  RunConfig c = small_config();
  c.iterations = 1;
  c.seeds = {11};
  const auto one = run_multiseed(c, fx.data, fx.gen, fx.backend);
  ASSERT_EQ(one.runs.size(), 1u);
  EXPECT_EQ(one.runs[0].to_json(), run(c, fx.data, fx.gen, fx.backend, 11).to_json());
  EXPECT_EQ(one.mean_target_f1[1], one.runs[0].iterations[1].dev_f1_target);

  c.seeds = {11, 11};
  const auto dup = run_multiseed(c, fx.data, fx.gen, fx.backend);
  EXPECT_EQ(dup.runs[0].to_json(), dup.runs[1].to_json());
  EXPECT_NEAR(dup.mean_source_f1[0], one.mean_source_f1[0], 1e-9);

  const auto dir = scratch("multi");
  c.seeds = {11, 12};
  const auto agg = run_multiseed(c, fx.data, fx.gen, fx.backend, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "seed_11" / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "seed_12" / "manifest.json"));
  EXPECT_EQ(read_json(dir / "aggregate.json"), agg.to_json());
  EXPECT_TRUE(agg.failures.empty());
  std::filesystem::remove_all(dir);
}

TEST(RunConfig, FromJsonAndSnapshot) {
  const auto j = nlohmann::json::parse(R"({
    "iterations": 3, "pool_size": 500, "criterion": "srs-conf", "k": 50, "combine": "weighted",
    "combine_weight": 0.25, "prompt": {"max_rules": 4}, "train": {"alpha": 0.1},
    "eval": {"punct": "exclude"}, "seeds": [4, 5], "jobs": 3,
    "generator": {"kind": "mock", "grammar": "g.json"}
  })");
  const auto c = RunConfig::from_json(j);
  EXPECT_EQ(c.iterations, 3u);
  EXPECT_EQ(c.criterion.kind, CriterionKind::srs_conf);
  EXPECT_EQ(c.criterion.k, 50u);
  EXPECT_EQ(c.criterion.combine, "weighted");
  EXPECT_EQ(c.prompt.max_rules, 4u);
  EXPECT_DOUBLE_EQ(c.train.alpha, 0.1);
  EXPECT_EQ(c.eval.punct, PunctMode::exclude);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_FALSE(c.snapshot().contains("jobs"));
  EXPECT_EQ(RunConfig::from_json(c.snapshot()).snapshot(), c.snapshot());

  EXPECT_EQ(code_of([] { RunConfig::from_json(nlohmann::json::parse(R"({"k": 0})")); }), Errc::config);
  EXPECT_EQ(code_of([] { RunConfig::from_json(nlohmann::json::parse(R"({"parse_mode": "x"})")); }), Errc::config);
  EXPECT_EQ(code_of([] { RunConfig::from_json(nlohmann::json::parse(R"({"iterations": "two"})")); }), Errc::config);
}

TEST(SelfTrain, TargetTrendOnSyntheticSetup) {
  const auto setup = testkit::make_synthetic();
  RunData data;
  data.source = setup.source_train;
  data.source_dev = setup.source_dev;
  data.target_dev = setup.target_dev;
  data.target_examples = setup.target_examples;
  data.converted_target = setup.converted_target;
  RunConfig c;
  c.iterations = 4;
  c.pool_size = 250;
  c.criterion.k = 50;
  c.seeds = {1, 2, 3};
  c.jobs = 4;
  const auto agg = run_multiseed(c, data, MockGenerator(setup.target_grammar), PcfgBackend{});
  int rising = 0;
  for (const auto& m : agg.runs) {
    bool ok = true;
    for (std::size_t i = 1; i < m.iterations.size(); ++i)
      ok = ok && m.iterations[i].dev_f1_target >= m.iterations[i - 1].dev_f1_target;
    rising += ok;
  }
  EXPECT_GE(rising, 2);
  EXPECT_GT(agg.mean_target_f1.back(), agg.mean_target_f1.front());
}
