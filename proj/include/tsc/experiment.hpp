#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsc/partition.hpp"
#include "tsc/rl.hpp"
#include "tsc/simulator.hpp"

namespace tsc {

enum class AgentKind { Ga2Naive, Ga2Aug, Fixed, Sotl, Random };
AgentKind agent_kind_from_string(const std::string& name);
const char* to_string(AgentKind a);
inline bool is_learning(AgentKind a) { return a == AgentKind::Ga2Naive || a == AgentKind::Ga2Aug; }

struct DemandConfig {
  std::string kind = "synthetic";  // synthetic | trace
  double mean_vph = 500.0;
  double std_fraction = 0.1;  // Gaussian std as a fraction of the mean
  std::string trace_file;
};

struct ExperimentConfig {
  std::string name = "experiment";
  NetworkSpec network;
  DemandConfig demand;
  PartitionConfig partition;
  std::string layout_file;  // explicit strategy
  AgentKind agent = AgentKind::Fixed;
  int cells = 5;
  int heads = 8;
  int episodes = 300;
  int steps_per_episode = 200;  // decision steps
  int action_interval = 20;     // seconds per decision
  int eval_episodes = 3;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output = "runs/experiment";

  LearnerConfig learner;
  EpsSchedule eps;
  int learn_every = 5;  // decision steps per train step
  double reward_scale = 1.0;

  std::vector<std::pair<PhaseId, int>> fixed_plan{
      {PhaseId::NS, 20}, {PhaseId::NSL, 20}, {PhaseId::EW, 20}, {PhaseId::EWL, 20}};
  int sotl_threshold = 10;
  int sotl_min_green = 10;
  SimConfig sim;
};

/// Missing keys keep their defaults; unknown keys and bad values are
/// collected into one ValidationError. Relative file paths resolve
/// against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);
/// FNV-1a 64 of the canonical (key-sorted) JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

/// Field checks plus a dry build of network, demand and partition.
void validate(const ExperimentConfig& c);

/// Per-entry-lane hourly rates drawn once from N(mean, std), truncated at 0,
/// with Poisson arrivals at those rates.
DemandSpec generate_synthetic_demand(const Network& net, double mean_vph, double std_vph, std::uint64_t seed);

struct EpisodeRecord {
  std::uint64_t seed = 0;
  int episode = 0;
  bool eval = false;
  double average_travel_time = 0.0;
  std::int64_t throughput = 0;
  std::vector<double> region_rewards;
  double mean_loss = 0.0;  // over train steps of the episode, 0 when none
  double epsilon = 0.0;    // at the end of the episode
  std::int64_t train_steps = 0;
};

nlohmann::json to_json(const EpisodeRecord& r, const std::string& hash);

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;
  std::vector<EpisodeRecord> evals;
  double wall_seconds = 0.0;

  double eval_travel_time() const;  // mean over evaluation episodes
  /// Mean training travel time over episodes [begin, end).
  double train_travel_time(int begin, int end) const;
};

struct ExperimentResult {
  std::string hash;
  std::vector<SeedResult> seeds;
  double median_eval_travel_time() const;
};

double median(std::vector<double> v);

/// Scenario shared by every episode of one seed.
struct Scenario {
  Network net;
  DemandSpec demand;
  std::vector<Region> regions;
};
Scenario build_scenario(const ExperimentConfig& c, std::uint64_t seed);

/// One seed, fully deterministic. `checkpoint` (when non-empty) receives the
/// trained parameters of a learning agent.
SeedResult run_seed(const ExperimentConfig& c, std::uint64_t seed, const std::string& checkpoint = "");

/// Runs every seed (OpenMP over seeds) and, when `write_files`, writes
/// results.jsonl, summary.tsv, timing.jsonl and config.json under c.output.
ExperimentResult run_experiment(const ExperimentConfig& c, bool write_files = true);

struct SweepAxis {
  std::string name;  // cells | heads | mask
  std::vector<std::string> values;
};
SweepAxis parse_sweep_axis(const std::string& spec);  // "cells=1,3,5"

struct SweepCell {
  std::vector<std::pair<std::string, std::string>> setting;
  ExperimentResult result;
};

/// Cartesian product over the axes with the configuration's seeds reused in
/// every cell; writes sweep.tsv under c.output.
std::vector<SweepCell> sweep(const ExperimentConfig& c, const std::vector<SweepAxis>& axes, bool write_files = true);
ExperimentConfig apply_setting(ExperimentConfig c, const std::string& name, const std::string& value);

}  // namespace tsc
