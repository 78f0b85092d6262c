#include "tsc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <omp.h>

#include "tsc/nn/checkpoint.hpp"

namespace tsc {

namespace fs = std::filesystem;
using nlohmann::json;

AgentKind agent_kind_from_string(const std::string& name) {
  if (name == "ga2-naive") return AgentKind::Ga2Naive;
  if (name == "ga2-aug") return AgentKind::Ga2Aug;
  if (name == "fixed") return AgentKind::Fixed;
  if (name == "sotl") return AgentKind::Sotl;
  if (name == "random") return AgentKind::Random;
  throw ValidationError({"unknown agent '" + name + "' (expected ga2-naive|ga2-aug|fixed|sotl|random)"});
}

const char* to_string(AgentKind a) {
  switch (a) {
    case AgentKind::Ga2Naive: return "ga2-naive";
    case AgentKind::Ga2Aug: return "ga2-aug";
    case AgentKind::Fixed: return "fixed";
    case AgentKind::Sotl: return "sotl";
    case AgentKind::Random: return "random";
  }
  return "?";
}

namespace {

int log_level() {
  const char* v = std::getenv("TSC_LOG");
  if (!v) return 1;
  const std::string s(v);
  if (s == "quiet" || s == "0") return 0;
  if (s == "debug" || s == "2") return 2;
  return 1;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return mix(mix(seed ^ mix(stream)) + index);
}

enum Stream : std::uint64_t { kDemand = 1, kPartition, kInit, kExplore, kReplay, kEpisode, kEval, kRandomAgent };

// Reads one JSON object, remembering which keys were consumed.
class Reader {
 public:
  Reader(const json& j, std::string where, std::vector<std::string>& issues)
      : j_(j), where_(std::move(where)), issues_(issues) {
    if (!j_.is_object()) issues_.push_back(where_ + ": expected an object");
  }
  ~Reader() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) issues_.push_back(where_ + ": unknown key '" + k + "'");
  }

  template <typename T>
  bool get(const std::string& key, T& dst) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return false;
    try {
      dst = j_.at(key).get<T>();
      return true;
    } catch (const json::exception&) {
      issues_.push_back(where_ + "." + key + ": wrong type");
      return false;
    }
  }
  const json* sub(const std::string& key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }
  void check(bool ok, const std::string& key, const std::string& what) {
    if (!ok) issues_.push_back(where_ + "." + key + ": " + what);
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::string& base_dir) {
  ExperimentConfig c;
  std::vector<std::string> issues;
  {
    Reader r(j, "config", issues);
    r.get("name", c.name);
    if (const json* n = r.sub("network")) {
      Reader rn(*n, "network", issues);
      rn.get("rows", c.network.rows);
      rn.get("cols", c.network.cols);
      rn.get("lanes_per_approach", c.network.lanes_per_approach);
      rn.get("approach_length_ew_m", c.network.approach_length_ew_m);
      rn.get("approach_length_ns_m", c.network.approach_length_ns_m);
      rn.get("discharge_rate_vps", c.network.discharge_rate_vps);
      rn.get("jam_spacing_m", c.network.jam_spacing_m);
      int cap = 0;
      if (rn.get("lane_capacity", cap)) c.network.lane_capacity = cap;
      if (const json* t = rn.sub("turn_shares")) {
        Reader rt(*t, "network.turn_shares", issues);
        rt.get("left", c.network.turn_shares.left);
        rt.get("straight", c.network.turn_shares.straight);
        rt.get("right", c.network.turn_shares.right);
      }
    }
    if (const json* d = r.sub("demand")) {
      Reader rd(*d, "demand", issues);
      rd.get("kind", c.demand.kind);
      rd.get("mean_vph", c.demand.mean_vph);
      rd.get("std_fraction", c.demand.std_fraction);
      if (rd.get("trace_file", c.demand.trace_file)) c.demand.trace_file = resolve(base_dir, c.demand.trace_file);
      rd.check(c.demand.kind == "synthetic" || c.demand.kind == "trace", "kind", "expected synthetic|trace");
      rd.check(c.demand.kind != "synthetic" || c.demand.mean_vph > 0, "mean_vph", "must be > 0");
      rd.check(c.demand.std_fraction >= 0, "std_fraction", "must be >= 0");
      rd.check(c.demand.kind != "trace" || !c.demand.trace_file.empty(), "trace_file", "required for trace demand");
    }
    if (const json* p = r.sub("partition")) {
      Reader rp(*p, "partition", issues);
      std::string strategy;
      if (rp.get("strategy", strategy)) {
        try {
          c.partition.strategy = partition_strategy_from_string(strategy);
        } catch (const ValidationError& e) {
          issues.insert(issues.end(), e.issues().begin(), e.issues().end());
        }
      }
      rp.get("max_region_size", c.partition.max_region_size);
      rp.get("seed", c.partition.seed);
      if (rp.get("layout_file", c.layout_file)) c.layout_file = resolve(base_dir, c.layout_file);
      rp.check(c.partition.max_region_size >= 1, "max_region_size", "must be >= 1");
      rp.check(c.partition.strategy != PartitionStrategy::Explicit || !c.layout_file.empty(), "layout_file",
               "required for the explicit strategy");
    }
    std::string agent;
    if (r.get("agent", agent)) {
      try {
        c.agent = agent_kind_from_string(agent);
      } catch (const ValidationError& e) {
        issues.insert(issues.end(), e.issues().begin(), e.issues().end());
      }
    }
    r.get("cells", c.cells);
    r.get("heads", c.heads);
    r.get("episodes", c.episodes);
    r.get("steps_per_episode", c.steps_per_episode);
    r.get("action_interval", c.action_interval);
    r.get("eval_episodes", c.eval_episodes);
    r.get("seeds", c.seeds);
    r.get("output", c.output);
    r.check(c.cells >= 1, "cells", "must be >= 1");
    r.check(c.heads >= 1, "heads", "must be >= 1");
    r.check(c.episodes >= 1, "episodes", "must be >= 1");
    r.check(c.steps_per_episode >= 1, "steps_per_episode", "must be >= 1");
    r.check(c.action_interval >= 1, "action_interval", "must be >= 1");
    r.check(c.eval_episodes >= 0, "eval_episodes", "must be >= 0");
    r.check(!c.seeds.empty(), "seeds", "at least one seed required");
    if (const json* l = r.sub("learner")) {
      Reader rl(*l, "learner", issues);
      auto& L = c.learner;
      rl.get("gamma", L.gamma);
      rl.get("batch", L.batch);
      rl.get("buffer_capacity", L.buffer_capacity);
      rl.get("target_sync_every", L.target_sync_every);
      rl.get("hidden1", L.hidden1);
      rl.get("hidden2", L.hidden2);
      rl.get("shared_q", L.shared_q);
      rl.get("lr", L.adam.lr);
      rl.get("weight_decay", L.adam.weight_decay);
      rl.get("eps_max", c.eps.eps_max);
      rl.get("eps_min", c.eps.eps_min);
      rl.get("eps_decay_steps", c.eps.decay_steps);
      rl.get("learn_every", c.learn_every);
      rl.get("reward_scale", c.reward_scale);
      rl.check(L.gamma >= 0 && L.gamma <= 1, "gamma", "must lie in [0, 1]");
      rl.check(L.batch >= 1, "batch", "must be >= 1");
      rl.check(L.buffer_capacity >= static_cast<std::size_t>(std::max(1, L.batch)), "buffer_capacity",
               "must hold at least one batch");
      rl.check(L.target_sync_every >= 1, "target_sync_every", "must be >= 1");
      rl.check(L.hidden1 >= 1 && L.hidden2 >= 1, "hidden", "layer widths must be >= 1");
      rl.check(L.adam.lr > 0, "lr", "must be > 0");
      rl.check(c.eps.eps_min >= 0 && c.eps.eps_min <= c.eps.eps_max && c.eps.eps_max <= 1, "eps",
               "need 0 <= eps_min <= eps_max <= 1");
      rl.check(c.eps.decay_steps >= 1, "eps_decay_steps", "must be >= 1");
      rl.check(c.learn_every >= 1, "learn_every", "must be >= 1");
      rl.check(c.reward_scale > 0, "reward_scale", "must be > 0");
    }
    if (const json* f = r.sub("fixed_plan")) {
      c.fixed_plan.clear();
      if (!f->is_array() || f->empty()) {
        issues.push_back("config.fixed_plan: expected a non-empty array of [phase, seconds]");
      } else {
        for (const auto& e : *f) {
          try {
            const PhaseId p = phase_from_string(e.at(0).get<std::string>());
            const int d = e.at(1).get<int>();
            if (p == PhaseId::AllRed || d < 1) throw std::invalid_argument("bad entry");
            c.fixed_plan.emplace_back(p, d);
          } catch (const std::exception&) {
            issues.push_back("config.fixed_plan: entries are [\"NS|NSL|EW|EWL\", seconds >= 1]");
          }
        }
      }
    }
    if (const json* s = r.sub("sotl")) {
      Reader rs(*s, "sotl", issues);
      rs.get("threshold", c.sotl_threshold);
      rs.get("min_green", c.sotl_min_green);
      rs.check(c.sotl_threshold >= 1, "threshold", "must be >= 1");
      rs.check(c.sotl_min_green >= 0, "min_green", "must be >= 0");
    }
    if (const json* s = r.sub("sim")) {
      Reader rs(*s, "sim", issues);
      rs.get("free_flow_speed", c.sim.free_flow_speed);
      rs.get("waiting_speed", c.sim.waiting_speed);
      rs.get("jam_spacing", c.sim.jam_spacing);
      rs.get("all_red_s", c.sim.all_red_s);
      rs.get("discharge_jitter", c.sim.discharge_jitter);
      rs.check(c.sim.free_flow_speed > 0, "free_flow_speed", "must be > 0");
      rs.check(c.sim.all_red_s >= 0, "all_red_s", "must be >= 0");
    }
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
  c.learner.ga2.cells = c.cells;
  c.learner.ga2.heads = c.heads;
  c.learner.ga2.mask = c.agent == AgentKind::Ga2Aug ? MaskKind::Augmented : MaskKind::Naive;
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError({"cannot open config '" + path + "'"});
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError({"config '" + path + "' is not valid JSON: " + e.what()});
  }
  return parse_config(j, fs::path(path).parent_path().string());
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["network"] = {{"rows", c.network.rows},
                  {"cols", c.network.cols},
                  {"lanes_per_approach", c.network.lanes_per_approach},
                  {"approach_length_ew_m", c.network.approach_length_ew_m},
                  {"approach_length_ns_m", c.network.approach_length_ns_m},
                  {"discharge_rate_vps", c.network.discharge_rate_vps},
                  {"jam_spacing_m", c.network.jam_spacing_m},
                  {"turn_shares",
                   {{"left", c.network.turn_shares.left},
                    {"straight", c.network.turn_shares.straight},
                    {"right", c.network.turn_shares.right}}}};
  if (c.network.lane_capacity) j["network"]["lane_capacity"] = *c.network.lane_capacity;
  j["demand"] = {{"kind", c.demand.kind}, {"mean_vph", c.demand.mean_vph}, {"std_fraction", c.demand.std_fraction}};
  if (!c.demand.trace_file.empty()) j["demand"]["trace_file"] = c.demand.trace_file;
  static const char* strategies[] = {"greedy", "min_regions", "random", "explicit"};
  j["partition"] = {{"strategy", strategies[static_cast<int>(c.partition.strategy)]},
                    {"max_region_size", c.partition.max_region_size},
                    {"seed", c.partition.seed}};
  if (!c.layout_file.empty()) j["partition"]["layout_file"] = c.layout_file;
  j["agent"] = to_string(c.agent);
  j["cells"] = c.cells;
  j["heads"] = c.heads;
  j["episodes"] = c.episodes;
  j["steps_per_episode"] = c.steps_per_episode;
  j["action_interval"] = c.action_interval;
  j["eval_episodes"] = c.eval_episodes;
  j["seeds"] = c.seeds;
  j["output"] = c.output;
  j["learner"] = {{"gamma", c.learner.gamma},
                  {"batch", c.learner.batch},
                  {"buffer_capacity", c.learner.buffer_capacity},
                  {"target_sync_every", c.learner.target_sync_every},
                  {"hidden1", c.learner.hidden1},
                  {"hidden2", c.learner.hidden2},
                  {"shared_q", c.learner.shared_q},
                  {"lr", c.learner.adam.lr},
                  {"weight_decay", c.learner.adam.weight_decay},
                  {"eps_max", c.eps.eps_max},
                  {"eps_min", c.eps.eps_min},
                  {"eps_decay_steps", c.eps.decay_steps},
                  {"learn_every", c.learn_every},
                  {"reward_scale", c.reward_scale}};
  json plan = json::array();
  for (const auto& [p, d] : c.fixed_plan) plan.push_back({to_string(p), d});
  j["fixed_plan"] = plan;
  j["sotl"] = {{"threshold", c.sotl_threshold}, {"min_green", c.sotl_min_green}};
  j["sim"] = {{"free_flow_speed", c.sim.free_flow_speed},
              {"waiting_speed", c.sim.waiting_speed},
              {"jam_spacing", c.sim.jam_spacing},
              {"all_red_s", c.sim.all_red_s},
              {"discharge_jitter", c.sim.discharge_jitter}};
  return j;
}

std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output");  // where results go does not change them
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

DemandSpec generate_synthetic_demand(const Network& net, double mean_vph, double std_vph, std::uint64_t seed) {
  if (!(mean_vph > 0)) throw ValidationError({"synthetic demand needs mean_vph > 0"});
  if (std_vph < 0) throw ValidationError({"synthetic demand needs std >= 0"});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(mean_vph, std_vph > 0 ? std_vph : 1.0);
  DemandSpec d;
  for (int l : net.entry_lanes()) {
    EntryDemand e;
    e.lane = l;
    e.process.kind = ArrivalProcess::Kind::Poisson;
    e.process.rate_vph = std_vph > 0 ? std::max(0.0, gauss(rng)) : mean_vph;
    d.entries.push_back(e);
  }
  return d;
}

Scenario build_scenario(const ExperimentConfig& c, std::uint64_t seed) {
  Scenario s{build_network(c.network), {}, {}};
  if (c.demand.kind == "trace") {
    std::ifstream in(c.demand.trace_file);
    if (!in) throw ValidationError({"cannot open demand trace '" + c.demand.trace_file + "'"});
    s.demand = parse_demand_trace(in);
  } else {
    s.demand = generate_synthetic_demand(s.net, c.demand.mean_vph, c.demand.mean_vph * c.demand.std_fraction,
                                         derive(seed, kDemand));
  }
  s.demand.routing.shares = c.network.turn_shares;
  validate(s.net, s.demand);
  PartitionConfig pc = c.partition;
  if (pc.strategy == PartitionStrategy::Explicit) {
    std::ifstream in(c.layout_file);
    if (!in) throw ValidationError({"cannot open partition layout '" + c.layout_file + "'"});
    pc.layout = parse_region_layout(in);
  }
  if (pc.strategy == PartitionStrategy::Random) pc.seed = derive(seed, kPartition, pc.seed);
  s.regions = partition(s.net, pc);
  return s;
}

void validate(const ExperimentConfig& c) {
  std::vector<std::string> issues;
  if (c.cells < 1) issues.push_back("cells must be >= 1");
  if (c.heads < 1) issues.push_back("heads must be >= 1");
  if (c.episodes < 1) issues.push_back("episodes must be >= 1");
  if (c.steps_per_episode < 1) issues.push_back("steps_per_episode must be >= 1");
  if (c.action_interval < 1) issues.push_back("action_interval must be >= 1");
  if (c.seeds.empty()) issues.push_back("at least one seed required");
  if (c.fixed_plan.empty()) issues.push_back("fixed_plan is empty");
  if (!issues.empty()) throw ValidationError(std::move(issues));
  validate(c.network);
  const Scenario s = build_scenario(c, c.seeds.front());
  const auto bad = validate_partition(s.net, s.regions);
  if (!bad.empty()) {
    for (const auto& v : bad) issues.push_back(v.message);
    throw ValidationError(std::move(issues));
  }
}

json to_json(const EpisodeRecord& r, const std::string& hash) {
  return {{"config_hash", hash},
          {"seed", r.seed},
          {"kind", r.eval ? "eval" : "train"},
          {"episode", r.episode},
          {"average_travel_time", r.average_travel_time},
          {"throughput", r.throughput},
          {"region_rewards", r.region_rewards},
          {"mean_loss", r.mean_loss},
          {"epsilon", r.epsilon},
          {"train_steps", r.train_steps}};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double SeedResult::eval_travel_time() const {
  if (evals.empty()) return train_travel_time(static_cast<int>(episodes.size()) - 1, static_cast<int>(episodes.size()));
  double s = 0.0;
  for (const auto& e : evals) s += e.average_travel_time;
  return s / static_cast<double>(evals.size());
}

double SeedResult::train_travel_time(int begin, int end) const {
  begin = std::max(begin, 0);
  end = std::min(end, static_cast<int>(episodes.size()));
  if (end <= begin) return 0.0;
  double s = 0.0;
  for (int i = begin; i < end; ++i) s += episodes[i].average_travel_time;
  return s / (end - begin);
}

double ExperimentResult::median_eval_travel_time() const {
  std::vector<double> v;
  for (const auto& s : seeds) v.push_back(s.eval_travel_time());
  return median(v);
}

namespace {

// Runs one episode under `decide`, which maps (decision step, simulator,
// raw state) to a phase per intersection.
struct EpisodeLoop {
  const ExperimentConfig& cfg;
  const Scenario& sc;

  template <typename Decide, typename Observe>
  EpisodeRecord run(std::uint64_t sim_seed, Decide&& decide, Observe&& after_step) const {
    Simulator sim(sc.net, sc.demand, cfg.sim, sim_seed);
    std::vector<double> reward_sums(sc.regions.size(), 0.0);
    for (int k = 0; k < cfg.steps_per_episode; ++k) {
      const std::vector<PhaseId> phases = decide(k, sim);
      sim.apply_action(phases);
      for (int i = 0; i < cfg.action_interval; ++i) sim.step();
      std::vector<double> rewards(sc.regions.size());
      for (std::size_t r = 0; r < sc.regions.size(); ++r) {
        rewards[r] = region_reward(sim, sc.regions[r].members);
        reward_sums[r] += rewards[r];
      }
      after_step(k, sim, rewards);
    }
    const Metrics m = metrics(sim, reward_sums);
    EpisodeRecord rec;
    rec.average_travel_time = m.average_travel_time;
    rec.throughput = m.throughput;
    rec.region_rewards = m.per_region_reward_sum;
    return rec;
  }
};

}  // namespace

SeedResult run_seed(const ExperimentConfig& c, std::uint64_t seed, const std::string& checkpoint) {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario sc = build_scenario(c, seed);
  const EpisodeLoop loop{c, sc};
  SeedResult out;
  out.seed = seed;
  const int verbose = log_level();
  auto log_episode = [&](const EpisodeRecord& r) {
    if (verbose >= 2 || (verbose >= 1 && (r.eval || (r.episode + 1) % 25 == 0 || r.episode == 0))) {
#pragma omp critical(tsc_log)
      std::cerr << "[" << to_string(c.agent) << " seed " << seed << "] " << (r.eval ? "eval " : "episode ")
                << r.episode << " att " << std::fixed << std::setprecision(2) << r.average_travel_time << " eps "
                << std::setprecision(3) << r.epsilon << " loss " << std::setprecision(4) << r.mean_loss << "\n";
    }
  };
  auto nothing = [](int, const Simulator&, const std::vector<double>&) {};

  if (!is_learning(c.agent)) {
    const FixedTimeController fixed(c.fixed_plan, c.action_interval);
    const SotlController sotl(c.sotl_threshold, c.sotl_min_green);
    auto episode = [&](std::uint64_t sim_seed, std::uint64_t agent_seed) {
      RandomController rnd(agent_seed);
      return loop.run(
          sim_seed,
          [&](int k, const Simulator& sim) {
            switch (c.agent) {
              case AgentKind::Sotl: return sotl.act(sim);
              case AgentKind::Random: return rnd.act(sc.net);
              default: return fixed.act(sc.net, k);
            }
          },
          nothing);
    };
    for (int e = 0; e < c.episodes; ++e) {
      EpisodeRecord r = episode(derive(seed, kEpisode, e), derive(seed, kRandomAgent, e));
      r.seed = seed;
      r.episode = e;
      log_episode(r);
      out.episodes.push_back(std::move(r));
    }
    for (int e = 0; e < c.eval_episodes; ++e) {
      EpisodeRecord r = episode(derive(seed, kEval, e), derive(seed, kRandomAgent, 1'000'000 + e));
      r.seed = seed;
      r.episode = e;
      r.eval = true;
      log_episode(r);
      out.evals.push_back(std::move(r));
    }
  } else {
    const int max_lanes = sc.net.max_incoming_lanes();
    RegionalLearner learner(sc.net, pad_regions(sc.net, sc.regions, c.partition.max_region_size, max_lanes), c.learner,
                            derive(seed, kInit));
    std::mt19937_64 explore(derive(seed, kExplore));
    std::mt19937_64 replay(derive(seed, kReplay));
    std::int64_t decision = 0;
    for (int e = 0; e < c.episodes; ++e) {
      RawState s;
      Eigen::MatrixXi actions;
      double loss_sum = 0.0;
      int losses = 0;
      EpisodeRecord r = loop.run(
          derive(seed, kEpisode, e),
          [&](int, const Simulator& sim) {
            s = observe_state(sim, c.cells);
            actions = learner.select_actions(s, c.eps.value(decision), explore);
            return learner.to_phases(actions);
          },
          [&](int, const Simulator& sim, const std::vector<double>& rewards) {
            std::vector<double> scaled = rewards;
            for (double& x : scaled) x *= c.reward_scale;
            // the episode end is a time limit, not a terminal state
            learner.remember(s, actions, scaled, observe_state(sim, c.cells), false);
            ++decision;
            if (decision % c.learn_every == 0 && learner.buffer().size() >= static_cast<std::size_t>(c.learner.batch)) {
              for (double l : learner.train_step(replay)) loss_sum += l;
              ++losses;
            }
          });
      r.seed = seed;
      r.episode = e;
      r.mean_loss = losses ? loss_sum / losses : 0.0;
      r.epsilon = c.eps.value(decision);
      r.train_steps = learner.train_steps();
      log_episode(r);
      out.episodes.push_back(std::move(r));
    }
    for (int e = 0; e < c.eval_episodes; ++e) {
      std::mt19937_64 unused(0);
      EpisodeRecord r = loop.run(
          derive(seed, kEval, e),
          [&](int, const Simulator& sim) {
            return learner.to_phases(learner.select_actions(observe_state(sim, c.cells), 0.0, unused));
          },
          nothing);
      r.seed = seed;
      r.episode = e;
      r.eval = true;
      r.train_steps = learner.train_steps();
      log_episode(r);
      out.evals.push_back(std::move(r));
    }
    if (!checkpoint.empty()) nn::save_checkpoint(checkpoint, learner.online());
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& c, bool write_files) {
  validate(c);
  ExperimentResult res;
  res.hash = config_hash(c);
  res.seeds.resize(c.seeds.size());
  if (write_files) fs::create_directories(c.output);
  std::vector<std::string> errors(c.seeds.size());
  const int n = static_cast<int>(c.seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      const std::string ckpt = write_files && is_learning(c.agent)
                                   ? (fs::path(c.output) / ("seed" + std::to_string(c.seeds[i]) + ".tsck")).string()
                                   : "";
      res.seeds[i] = run_seed(c, c.seeds[i], ckpt);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("run failed: " + e);
  if (!write_files) return res;

  std::ofstream cfg(fs::path(c.output) / "config.json");
  json jc = to_json(c);
  jc["config_hash"] = res.hash;
  cfg << jc.dump(2) << "\n";

  std::ofstream results(fs::path(c.output) / "results.jsonl");
  std::ofstream timing(fs::path(c.output) / "timing.jsonl");
  std::ofstream summary(fs::path(c.output) / "summary.tsv");
  summary << "agent\tcells\theads\tseed\teval_travel_time\tfirst50_travel_time\tlast50_travel_time\tepisodes\n";
  summary << std::setprecision(10);
  for (const auto& s : res.seeds) {
    for (const auto& r : s.episodes) results << to_json(r, res.hash).dump() << "\n";
    for (const auto& r : s.evals) results << to_json(r, res.hash).dump() << "\n";
    timing << json{{"config_hash", res.hash}, {"seed", s.seed}, {"wall_seconds", s.wall_seconds}}.dump() << "\n";
    const int ne = static_cast<int>(s.episodes.size());
    summary << to_string(c.agent) << "\t" << c.cells << "\t" << c.heads << "\t" << s.seed << "\t"
            << s.eval_travel_time() << "\t" << s.train_travel_time(0, 50) << "\t" << s.train_travel_time(ne - 50, ne)
            << "\t" << ne << "\n";
  }
  summary << to_string(c.agent) << "\t" << c.cells << "\t" << c.heads << "\tmedian\t" << res.median_eval_travel_time()
          << "\t\t\t\n";
  return res;
}

SweepAxis parse_sweep_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
    throw ValidationError({"sweep axis '" + spec + "' must look like name=v1,v2"});
  SweepAxis a;
  a.name = spec.substr(0, eq);
  if (a.name != "cells" && a.name != "heads" && a.name != "mask")
    throw ValidationError({"unknown sweep axis '" + a.name + "' (expected cells|heads|mask)"});
  std::stringstream ss(spec.substr(eq + 1));
  std::string v;
  while (std::getline(ss, v, ','))
    if (!v.empty()) a.values.push_back(v);
  if (a.values.empty()) throw ValidationError({"sweep axis '" + a.name + "' has no values"});
  return a;
}

ExperimentConfig apply_setting(ExperimentConfig c, const std::string& name, const std::string& value) {
  auto as_int = [&](int& dst) {
    try {
      std::size_t used = 0;
      dst = std::stoi(value, &used);
      if (used != value.size() || dst < 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ValidationError({name + " value '" + value + "' must be a positive integer"});
    }
  };
  if (name == "cells") {
    as_int(c.cells);
    c.learner.ga2.cells = c.cells;
  } else if (name == "heads") {
    as_int(c.heads);
    c.learner.ga2.heads = c.heads;
  } else if (name == "mask") {
    const MaskKind m = mask_kind_from_string(value);
    c.learner.ga2.mask = m;
    c.agent = m == MaskKind::Augmented ? AgentKind::Ga2Aug : AgentKind::Ga2Naive;
  } else {
    throw ValidationError({"unknown setting '" + name + "'"});
  }
  return c;
}

std::vector<SweepCell> sweep(const ExperimentConfig& c, const std::vector<SweepAxis>& axes, bool write_files) {
  std::vector<std::vector<std::pair<std::string, std::string>>> grid{{}};
  for (const auto& ax : axes) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& g : grid)
      for (const auto& v : ax.values) {
        auto h = g;
        h.emplace_back(ax.name, v);
        next.push_back(std::move(h));
      }
    grid = std::move(next);
  }
  // validate every cell before running any
  std::vector<ExperimentConfig> configs;
  for (const auto& setting : grid) {
    ExperimentConfig cc = c;
    std::string tag;
    for (const auto& [k, v] : setting) {
      cc = apply_setting(std::move(cc), k, v);
      tag += (tag.empty() ? "" : "_") + k + "=" + v;
    }
    cc.output = (fs::path(c.output) / tag).string();
    validate(cc);
    configs.push_back(std::move(cc));
  }
  std::vector<SweepCell> cells;
  for (std::size_t i = 0; i < grid.size(); ++i) cells.push_back({grid[i], run_experiment(configs[i], write_files)});
  if (write_files) {
    fs::create_directories(c.output);
    std::ofstream out(fs::path(c.output) / "sweep.tsv");
    out << std::setprecision(10);
    for (const auto& ax : axes) out << ax.name << "\t";
    out << "config_hash\tmedian_eval_travel_time";
    for (auto s : c.seeds) out << "\tseed" << s;
    out << "\n";
    for (const auto& cell : cells) {
      for (const auto& [k, v] : cell.setting) out << v << "\t";
      out << cell.result.hash << "\t" << cell.result.median_eval_travel_time();
      for (const auto& s : cell.result.seeds) out << "\t" << s.eval_travel_time();
      out << "\n";
    }
  }
  return cells;
}

}  // namespace tsc
