#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsc/experiment.hpp"

using namespace tsc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double GOLDEN_FIXED_ATT = 99.390742001361474;
constexpr std::int64_t GOLDEN_FIXED_THROUGHPUT = 1161;

ExperimentConfig tiny(AgentKind agent) {
  ExperimentConfig c;
  c.network.rows = 1;
  c.network.cols = 2;
  c.network.lanes_per_approach = 3;
  c.network.approach_length_ew_m = 200;
  c.network.approach_length_ns_m = 200;
  c.agent = agent;
  c.episodes = 1;
  c.steps_per_episode = 30;
  c.eval_episodes = 1;
  c.seeds = {7};
  c.learner.hidden1 = 16;
  c.learner.hidden2 = 8;
  c.learner.batch = 4;
  c.learner.buffer_capacity = 64;
  c.cells = 2;
  c.heads = 2;
  c.learner.ga2.cells = 2;
  c.learner.ga2.heads = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("tsc_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> issues_of(const json& j) {
  try {
    parse_config(j);
  } catch (const ValidationError& e) {
    return e.issues();
  }
  return {};
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig c = parse_config(json::object());
  EXPECT_EQ(c.cells, 5);
  EXPECT_EQ(c.heads, 8);
  EXPECT_EQ(c.episodes, 300);
  const ExperimentConfig back = parse_config(to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, UnknownKeysAreReportedWithPath) {
  const auto issues = issues_of(json{{"celz", 3}, {"network", {{"rowz", 2}}}});
  ASSERT_EQ(issues.size(), 2u);
  EXPECT_EQ(issues[0], "network: unknown key 'rowz'");
  EXPECT_EQ(issues[1], "config: unknown key 'celz'");
}

TEST(Config, AllBadValuesCollectedAtOnce) {
  const auto issues = issues_of(json{{"cells", 0}, {"heads", -1}, {"agent", "nope"}, {"seeds", json::array()}});
  EXPECT_EQ(issues.size(), 4u);
}

TEST(Config, WrongTypeIsAnIssueNotACrash) {
  EXPECT_FALSE(issues_of(json{{"episodes", "many"}}).empty());
}

TEST(Config, HashIgnoresOutputButNotSettings) {
  ExperimentConfig a = parse_config(json::object());
  ExperimentConfig b = a;
  b.output = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.cells = 3;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, ShippedConfigsValidate) {
  for (const char* name : {"desk_2x2.json", "grid_4x4.json", "grid_16x3.json"}) {
    SCOPED_TRACE(name);
    EXPECT_NO_THROW(validate(load_config(std::string(TSC_CONFIG_DIR) + "/" + name)));
  }
}

TEST(Config, ApplySettingKeepsEncoderInSync) {
  ExperimentConfig c = apply_setting(parse_config(json::object()), "cells", "3");
  EXPECT_EQ(c.cells, 3);
  EXPECT_EQ(c.learner.ga2.cells, 3);
  c = apply_setting(c, "mask", "aug");
  EXPECT_EQ(c.learner.ga2.mask, MaskKind::Augmented);
  EXPECT_THROW(apply_setting(c, "cells", "x"), ValidationError);
  EXPECT_THROW(apply_setting(c, "depth", "2"), ValidationError);
}

TEST(Sweep, AxisParsing) {
  const SweepAxis a = parse_sweep_axis("cells=1,3,5");
  EXPECT_EQ(a.name, "cells");
  EXPECT_EQ(a.values, (std::vector<std::string>{"1", "3", "5"}));
  EXPECT_THROW(parse_sweep_axis("cells"), ValidationError);
  EXPECT_THROW(parse_sweep_axis("cells="), ValidationError);
}

TEST(Demand, ZeroSpreadGivesTheMeanOnEveryEntryLane) {
  const Network net = build_network(NetworkSpec{.rows = 1, .cols = 1, .lanes_per_approach = 3});
  const DemandSpec d = generate_synthetic_demand(net, 500.0, 0.0, 3);
  ASSERT_EQ(d.entries.size(), 12u);
  for (const auto& e : d.entries) {
    EXPECT_EQ(e.process.rate_vph, 500.0);
    EXPECT_EQ(e.process.kind, ArrivalProcess::Kind::Poisson);
  }
}

TEST(Demand, SeededAndTruncated) {
  const Network net = build_network(NetworkSpec{.rows = 2, .cols = 2, .lanes_per_approach = 3});
  const DemandSpec a = generate_synthetic_demand(net, 500.0, 50.0, 11);
  const DemandSpec b = generate_synthetic_demand(net, 500.0, 50.0, 11);
  const DemandSpec c = generate_synthetic_demand(net, 500.0, 50.0, 12);
  bool differs = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].process.rate_vph, b.entries[i].process.rate_vph);
    differs |= a.entries[i].process.rate_vph != c.entries[i].process.rate_vph;
  }
  EXPECT_TRUE(differs);
  for (const auto& e : generate_synthetic_demand(net, 10.0, 1000.0, 5).entries) EXPECT_GE(e.process.rate_vph, 0.0);
}

TEST(Demand, HourOfArrivalsWithinThreeSigma) {
  const Network net = build_network(NetworkSpec{.rows = 1, .cols = 1, .lanes_per_approach = 3});
  Simulator sim(net, generate_synthetic_demand(net, 500.0, 0.0, 1), {}, 21);
  for (int t = 0; t < 3600; ++t) sim.step();
  const double n = static_cast<double>(sim.state().next_vehicle_id);
  EXPECT_NEAR(n, 6000.0, 3.0 * std::sqrt(6000.0));
}

TEST(Experiment, FixedTimeResultsAreBitIdenticalAcrossRuns) {
  ExperimentConfig c = tiny(AgentKind::Fixed);
  c.output = scratch("fixed_a").string();
  run_experiment(c);
  const std::string a = slurp(fs::path(c.output) / "results.jsonl");
  c.output = scratch("fixed_b").string();
  run_experiment(c);
  const std::string b = slurp(fs::path(c.output) / "results.jsonl");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_TRUE(fs::exists(fs::path(c.output) / "summary.tsv"));
  EXPECT_TRUE(fs::exists(fs::path(c.output) / "config.json"));
  EXPECT_FALSE(fs::exists(fs::path(c.output) / "seed7.tsck"));
}

TEST(Experiment, ResultLinesCarryTheConfigHash) {
  ExperimentConfig c = tiny(AgentKind::Sotl);
  c.output = scratch("hash").string();
  const ExperimentResult r = run_experiment(c);
  std::ifstream in(fs::path(c.output) / "results.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const json j = json::parse(line);
    EXPECT_EQ(j.at("config_hash").get<std::string>(), r.hash);
    ++n;
  }
  EXPECT_EQ(n, 2);  // one training and one evaluation episode
}

// Frozen from a first run of this configuration; any change to simulator,
// demand generation or the controller shows up here.
TEST(Experiment, FixedTimeGoldenMetric) {
  const SeedResult s = run_seed(tiny(AgentKind::Fixed), 7);
  ASSERT_EQ(s.evals.size(), 1u);
  EXPECT_DOUBLE_EQ(s.evals[0].average_travel_time, GOLDEN_FIXED_ATT);
  EXPECT_EQ(s.evals[0].throughput, GOLDEN_FIXED_THROUGHPUT);
}

TEST(Experiment, LearningAgentRunsAndCheckpoints) {
  ExperimentConfig c = tiny(AgentKind::Ga2Naive);
  c.episodes = 2;
  c.output = scratch("ga2").string();
  const ExperimentResult r = run_experiment(c);
  ASSERT_EQ(r.seeds.size(), 1u);
  EXPECT_EQ(r.seeds[0].episodes.size(), 2u);
  EXPECT_GT(r.seeds[0].episodes.back().train_steps, 0);
  EXPECT_TRUE(std::isfinite(r.seeds[0].eval_travel_time()));
  EXPECT_TRUE(fs::exists(fs::path(c.output) / "seed7.tsck"));
}

TEST(Experiment, LearningAgentIsSeedDeterministic) {
  ExperimentConfig c = tiny(AgentKind::Ga2Aug);
  c.learner.ga2.mask = MaskKind::Augmented;
  c.episodes = 2;
  const SeedResult a = run_seed(c, 3);
  const SeedResult b = run_seed(c, 3);
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].average_travel_time, b.episodes[i].average_travel_time);
    EXPECT_EQ(a.episodes[i].mean_loss, b.episodes[i].mean_loss);
  }
  EXPECT_EQ(a.eval_travel_time(), b.eval_travel_time());
}

TEST(Experiment, RandomIsNotBetterThanFixedUnderLoad) {
  ExperimentConfig c = tiny(AgentKind::Fixed);
  c.steps_per_episode = 90;
  c.seeds = {1, 2, 3};
  const double fixed = run_experiment(c, false).median_eval_travel_time();
  c.agent = AgentKind::Random;
  const double rnd = run_experiment(c, false).median_eval_travel_time();
  EXPECT_GE(rnd, fixed);
}

TEST(Experiment, SweepReusesSeedsInEveryCell) {
  ExperimentConfig c = tiny(AgentKind::Ga2Naive);
  c.seeds = {4, 5};
  c.steps_per_episode = 10;
  c.output = scratch("sweep").string();
  const auto cells =
      sweep(c, {parse_sweep_axis("cells=1,3,5"), parse_sweep_axis("heads=5,8")}, true);
  ASSERT_EQ(cells.size(), 6u);
  for (const auto& cell : cells) {
    ASSERT_EQ(cell.result.seeds.size(), 2u);
    EXPECT_EQ(cell.result.seeds[0].seed, 4u);
    EXPECT_EQ(cell.result.seeds[1].seed, 5u);
  }
  EXPECT_EQ(cells[0].setting, (std::vector<std::pair<std::string, std::string>>{{"cells", "1"}, {"heads", "5"}}));
  std::ifstream in(fs::path(c.output) / "sweep.tsv");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 7);
}

TEST(Experiment, SweepRejectsBadCellsBeforeRunning) {
  ExperimentConfig c = tiny(AgentKind::Ga2Naive);
  c.output = scratch("sweep_bad").string();
  EXPECT_THROW(sweep(c, {parse_sweep_axis("cells=1,0")}), ValidationError);
  EXPECT_FALSE(fs::exists(fs::path(c.output) / "sweep.tsv"));
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  const std::string cli = TSC_CLI_PATH;
  auto code = [&](const std::string& args) {
    const int s = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(s);
  };
  std::ofstream(dir / "bad.json") << R"({"cells": 0, "bogus": 1})";
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_EQ(code("validate --config " + std::string(TSC_CONFIG_DIR) + "/desk_2x2.json"), 0);
  EXPECT_EQ(code("validate --config " + (dir / "bad.json").string()), 2);
  EXPECT_NE(code("validate --config " + (dir / "broken.json").string()), 0);
  EXPECT_NE(code("frobnicate"), 0);
  EXPECT_NE(code("run --config /nonexistent.json"), 0);
}
