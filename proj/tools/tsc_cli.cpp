#include <iostream>

#include <CLI11.hpp>

#include "tsc/experiment.hpp"

using namespace tsc;

namespace {

struct RunOverrides {
  std::vector<std::uint64_t> seeds;
  int episodes = 0;
  std::string agent, mask, out;
  int cells = 0, heads = 0;
  bool unshared = false;
};

ExperimentConfig apply(ExperimentConfig c, const RunOverrides& o) {
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.episodes > 0) c.episodes = o.episodes;
  if (!o.agent.empty()) {
    c.agent = agent_kind_from_string(o.agent);
    c.learner.ga2.mask = c.agent == AgentKind::Ga2Aug ? MaskKind::Augmented : MaskKind::Naive;
  }
  if (!o.mask.empty()) {
    if (!is_learning(c.agent)) throw ValidationError({"--mask applies to ga2-naive|ga2-aug agents only"});
    c = apply_setting(std::move(c), "mask", o.mask);
  }
  if (o.cells > 0) c = apply_setting(std::move(c), "cells", std::to_string(o.cells));
  if (o.heads > 0) c = apply_setting(std::move(c), "heads", std::to_string(o.heads));
  if (o.unshared) c.learner.shared_q = false;
  if (!o.out.empty()) c.output = o.out;
  return c;
}

void report(const ExperimentResult& r, const ExperimentConfig& c) {
  std::cout << "config " << r.hash << " agent " << to_string(c.agent) << " -> " << c.output << "\n";
  for (const auto& s : r.seeds)
    std::cout << "  seed " << s.seed << " eval travel time " << s.eval_travel_time() << " s\n";
  std::cout << "  median " << r.median_eval_travel_time() << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regional traffic signal control experiments"};
  app.require_subcommand(1);

  std::string config_path;
  RunOverrides o;
  auto* run = app.add_subcommand("run", "Train/evaluate one agent over the configured seeds");
  run->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", o.seeds, "Seed(s), replacing the configured list");
  run->add_option("--episodes", o.episodes, "Training episodes")->check(CLI::PositiveNumber);
  run->add_option("--agent", o.agent, "ga2-naive|ga2-aug|fixed|sotl|random");
  run->add_option("--cells", o.cells, "Cells per lane (B)")->check(CLI::PositiveNumber);
  run->add_option("--heads", o.heads, "Attention heads (K)")->check(CLI::PositiveNumber);
  run->add_option("--mask", o.mask, "naive|aug");
  run->add_flag("--unshared", o.unshared, "One Q-network per region");
  run->add_option("--out", o.out, "Output directory");

  std::vector<std::string> axes;
  auto* sw = app.add_subcommand("sweep", "Cartesian sweep over cells/heads/mask with shared seeds");
  sw->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sw->add_option("--axis", axes, "name=v1,v2 (repeatable)")->required();
  sw->add_option("--episodes", o.episodes, "Training episodes")->check(CLI::PositiveNumber);
  sw->add_option("--seed", o.seeds, "Seed(s)");
  sw->add_option("--out", o.out, "Output directory");

  auto* val = app.add_subcommand("validate", "Check a configuration without simulating");
  val->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = apply(load_config(config_path), o);
    if (*val) {
      validate(cfg);
      std::cout << "ok " << config_hash(cfg) << "\n";
    } else if (*run) {
      report(run_experiment(cfg), cfg);
    } else if (*sw) {
      std::vector<SweepAxis> parsed;
      for (const auto& a : axes) parsed.push_back(parse_sweep_axis(a));
      for (const auto& cell : sweep(cfg, parsed)) {
        for (const auto& [k, v] : cell.setting) std::cout << k << "=" << v << " ";
        std::cout << "median " << cell.result.median_eval_travel_time() << " s\n";
      }
    }
  } catch (const ValidationError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& i : e.issues()) std::cerr << "  " << i << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
