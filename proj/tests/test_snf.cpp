#include <gtest/gtest.h>

#include <random>

#include "tsc/snf.hpp"

using namespace tsc;

namespace {

Network grid(int rows, int cols, int lanes = 3) {
  NetworkSpec s;
  s.rows = rows;
  s.cols = cols;
  s.lanes_per_approach = lanes;
  s.approach_length_ew_m = 75;  // capacity 10, so random states hit blockage
  s.approach_length_ns_m = 75;
  return build_network(s);
}

struct RandomState {
  std::vector<double> x, demand;
  std::vector<PhaseId> phases;
};

RandomState random_state(const Network& net, std::mt19937_64& rng) {
  RandomState s;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int l = 0; l < net.num_incoming_lanes(); ++l) {
    const double cap = net.lane(l).capacity;
    // about a fifth of the lanes sit exactly at capacity
    s.x.push_back(u(rng) < 0.2 ? cap : u(rng) * cap);
    s.demand.push_back(net.lane(l).is_entry ? 2.0 * u(rng) : 0.0);
  }
  for (int v = 0; v < net.num_internal(); ++v) s.phases.push_back(static_cast<PhaseId>(rng() % 5));
  return s;
}

}  // namespace

TEST(Blockage, EmptyAndFullDownstream) {
  const Network net = grid(1, 2);
  std::vector<double> wave(net.num_lanes(), 0.0);
  const auto in = net.all_incoming_lanes();
  std::vector<int> all(net.num_lanes());
  for (int i = 0; i < net.num_lanes(); ++i) all[i] = i;
  const MaskMatrix open = blockage_matrix(net, wave, in, all);
  EXPECT_EQ(open.values, movement_matrix(net, in, all).values);

  // fill one downstream lane: exactly the rows of lanes moving into it go to zero
  const int target = [&] {
    for (const auto& m : net.movements())
      if (net.lane(m.to_lane).is_incoming) return m.to_lane;
    return -1;
  }();
  ASSERT_GE(target, 0);
  wave[target] = net.lane(target).capacity;
  const MaskMatrix bm = blockage_matrix(net, wave, in, all);
  int zero_rows = 0;
  for (int l : in) {
    const bool feeds = net.find_movement(l, target) >= 0;
    EXPECT_EQ(bm(l, target), 0.0);
    if (feeds) zero_rows += bm.values.row(l).sum() == 0.0;
    else EXPECT_EQ(bm.values.row(l), open.values.row(l));
  }
  EXPECT_EQ(zero_rows, 1);  // 3-lane approaches: one movement per lane

  // one vehicle below capacity keeps it open
  wave[target] -= 1;
  EXPECT_EQ(blockage_matrix(net, wave, in, all).values, open.values);
}

TEST(Oracle, NoSignalNoDemandIsIdentity) {
  const Network net = grid(2, 2);
  std::mt19937_64 rng(1);
  RandomState s = random_state(net, rng);
  std::fill(s.demand.begin(), s.demand.end(), 0.0);
  std::fill(s.phases.begin(), s.phases.end(), PhaseId::AllRed);
  const Routing r = make_routing(net, {});
  const SnfInputs in = snf_inputs(net, r, s.x, s.phases, s.demand);
  EXPECT_EQ(in.a.sum(), 0.0);
  const Vector out = snf_update_oracle(in);
  for (int l = 0; l < net.num_incoming_lanes(); ++l) EXPECT_EQ(out[l], s.x[l]);
}

TEST(Oracle, EntryLaneDemandUnderRed) {
  const Network net = grid(1, 1);
  std::vector<double> x(net.num_incoming_lanes(), 1.0), d(net.num_incoming_lanes(), 0.0);
  const int e = net.entry_lanes()[0];
  d[e] = 2.0;
  const std::vector<PhaseId> red{PhaseId::AllRed};
  const Vector out = snf_update_oracle(snf_inputs(net, make_routing(net, {}), x, red, d));
  EXPECT_EQ(out[e], 3.0);
}

TEST(Oracle, RejectsBadInputs) {
  const Network net = grid(1, 1);
  std::vector<double> x(net.num_incoming_lanes(), 1.0), d(net.num_incoming_lanes(), 0.0);
  SnfInputs in = snf_inputs(net, make_routing(net, {}), x, std::vector<PhaseId>{PhaseId::NS}, d);
  SnfInputs neg = in;
  neg.x[0] = -1;
  EXPECT_THROW(snf_update_oracle(neg), std::invalid_argument);
  SnfInputs bad = in;
  bad.rp(0, 0) += 0.5;
  EXPECT_THROW(snf_update_oracle(bad), std::invalid_argument);
}

class OracleEquivalence : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(OracleEquivalence, FractionalFlowMatchesOracle) {
  const auto [rows, cols] = GetParam();
  const Network net = grid(rows, cols);
  RoutingConfig cfg;
  cfg.random_seed = 17;
  const Routing routing = make_routing(net, cfg);
  std::mt19937_64 rng(rows * 100 + cols);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const RandomState s = random_state(net, rng);
    FractionalFlowSim sim(net, routing);
    sim.set_queues(s.x);
    sim.step(s.phases, s.demand);
    const Vector oracle = snf_update_oracle(snf_inputs(net, routing, s.x, s.phases, s.demand));
    for (int l = 0; l < net.num_incoming_lanes(); ++l) worst = std::max(worst, std::abs(oracle[l] - sim.queues()[l]));
  }
  EXPECT_LE(worst, 1e-9);
}

INSTANTIATE_TEST_SUITE_P(Grids, OracleEquivalence, ::testing::Values(std::pair{1, 2}, std::pair{2, 2}));

TEST(Oracle, RegionDecompositionMatchesWhole) {
  const Network net = grid(2, 3);
  const Routing routing = make_routing(net, {});
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const RandomState s = random_state(net, rng);
    const SnfInputs in = snf_inputs(net, routing, s.x, s.phases, s.demand);
    const Vector whole = snf_update_oracle(in);
    for (const std::vector<int> members : {std::vector<int>{0, 1, 3}, std::vector<int>{2, 5}, std::vector<int>{4}}) {
      const auto f_in = region_lanes(net, members);
      const auto f_out = outside_neighbor_lanes(net, members);
      const Vector part = snf_update_oracle(in, f_in, f_out);
      for (std::size_t i = 0; i < f_in.size(); ++i) EXPECT_NEAR(part[i], whole[f_in[i]], 1e-12);
      const SnfTerms t = snf_region_terms(in, f_in, f_out);
      if (f_out.empty()) EXPECT_TRUE(t.inter.isZero());
    }
  }
}

TEST(Oracle, ConservesVehiclesBetweenInternalLanes) {
  // with no demand, total queue only drops by what leaves into exit lanes
  const Network net = grid(2, 2);
  const Routing routing = make_routing(net, {});
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    RandomState s = random_state(net, rng);
    std::fill(s.demand.begin(), s.demand.end(), 0.0);
    const SnfInputs in = snf_inputs(net, routing, s.x, s.phases, s.demand);
    const Vector out = snf_update_oracle(in);
    double to_exit = 0.0;
    for (int l = 0; l < net.num_incoming_lanes(); ++l) {
      const Movement& mv = net.movement(net.lane(l).movements.front());
      if (net.lane(mv.to_lane).is_incoming) continue;
      to_exit += std::min(in.c[l] * in.a[l], in.x[l]);
    }
    EXPECT_NEAR(in.x.sum() - out.sum(), to_exit, 1e-9);
  }
}
