#include <gtest/gtest.h>

#include <set>
#include <tuple>

#include "tsc/network.hpp"

using namespace tsc;

namespace {

NetworkSpec grid(int rows, int cols, int lanes = 3) {
  NetworkSpec s;
  s.rows = rows;
  s.cols = cols;
  s.lanes_per_approach = lanes;
  return s;
}

// Series of two internal nodes joined west-to-east with one-lane approaches
// and no externals: the only movements are straight through each node.
LayoutSpec series_layout() {
  LayoutSpec l;
  l.lanes_per_approach = 1;
  l.nodes = {{0, 0, false, 0, -1}, {100, 0, true, 0, 0}, {200, 0, true, 0, 1}, {300, 0, false, 0, 2}};
  l.edges = {{0, 1}, {1, 2}, {2, 3}};
  return l;
}

}  // namespace

TEST(Network, GridCounts) {
  const Network n22 = build_network(grid(2, 2));
  EXPECT_EQ(n22.num_internal(), 4);
  EXPECT_EQ(n22.intersections().size(), 12u);

  NetworkSpec hz = grid(4, 4);
  hz.approach_length_ew_m = 800;
  hz.approach_length_ns_m = 600;
  const Network n44 = build_network(hz);
  EXPECT_EQ(n44.num_internal(), 16);

  EXPECT_EQ(build_network(grid(16, 3)).num_internal(), 48);
}

TEST(Network, LaneCapacityFromJamSpacing) {
  NetworkSpec s = grid(1, 1);
  s.approach_length_ew_m = 800;
  s.approach_length_ns_m = 600;
  const Network net = build_network(s);
  for (const auto& ap : net.approaches()) {
    const int expected = ap.length > 700 ? 106 : 80;  // floor(800/7.5), floor(600/7.5)
    for (int l : ap.lanes) EXPECT_EQ(net.lane(l).capacity, expected);
  }
}

TEST(Network, MalformedSpecListsFields) {
  NetworkSpec s = grid(2, 2);
  s.lanes_per_approach = 0;
  s.approach_length_ew_m = -1;
  try {
    build_network(s);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_GE(e.issues().size(), 2u);
  }
}

TEST(Network, IncomingLanesAreDense) {
  const Network net = build_network(grid(2, 3));
  std::set<int> seen;
  for (int v = 0; v < net.num_internal(); ++v)
    for (int l : net.incoming_lanes(v)) seen.insert(l);
  EXPECT_EQ(static_cast<int>(seen.size()), net.num_incoming_lanes());
  EXPECT_EQ(*seen.rbegin(), net.num_incoming_lanes() - 1);
  for (int l = 0; l < net.num_incoming_lanes(); ++l) EXPECT_FALSE(net.lane(l).movements.empty());
}

TEST(Network, RightTurnsAlwaysPermitted) {
  const Network net = build_network(grid(2, 2));
  for (int v = 0; v < net.num_internal(); ++v) {
    for (const auto& mv : net.movements()) {
      if (mv.intersection != v || mv.turn != Turn::Right) continue;
      for (const auto& ph : net.phases(v))
        EXPECT_TRUE(std::binary_search(ph.permitted_movements.begin(), ph.permitted_movements.end(), mv.id));
    }
  }
}

TEST(MovementMatrix, SeriesSingleMovement) {
  const Network net = build_network(series_layout());
  // lane feeding node 1 from the west, and the lane from node 1 to node 2
  const int l = net.approach(net.intersection(0).incoming[static_cast<int>(Side::West)]).lanes[0];
  const int m = net.approach(net.intersection(0).outgoing[static_cast<int>(Side::East)]).lanes[0];
  std::vector<int> f{l, m};
  const MaskMatrix mm = movement_matrix(net, f, f);
  EXPECT_EQ(mm(0, 1), 1.0);
  EXPECT_EQ(mm(0, 0) + mm(1, 0) + mm(1, 1), 0.0);
}

TEST(MovementMatrix, EmptySets) {
  const Network net = build_network(grid(1, 1));
  const MaskMatrix mm = movement_matrix(net, {}, {});
  EXPECT_EQ(mm.rows(), 0);
  EXPECT_EQ(mm.cols(), 0);
}

TEST(MovementMatrix, HandEnumerated2x2) {
  const Network net = build_network(grid(2, 2));
  // Hand enumeration: node (r,c), arriving side s, lane k of 3.
  // lane 0 turns left (exit side s+1), lane 1 straight (s+2), lane 2 right (s+3);
  // the target lane index is 0 for left, 2 for right, 1 for straight.
  // Exit sides leaving the grid go to an exit approach of the same node.
  std::set<std::tuple<int, int, int, int, int>> expected;  // node, in side, in lane, out side, out lane
  for (int v = 0; v < 4; ++v)
    for (int s = 0; s < 4; ++s) {
      expected.insert({v, s, 0, (s + 1) % 4, 0});
      expected.insert({v, s, 1, (s + 2) % 4, 1});
      expected.insert({v, s, 2, (s + 3) % 4, 2});
    }
  std::set<std::tuple<int, int, int, int, int>> built;
  for (const auto& mv : net.movements()) {
    const Lane& from = net.lane(mv.from_lane);
    const Lane& to = net.lane(mv.to_lane);
    const Approach& a_in = net.approach(from.approach_id);
    const Approach& a_out = net.approach(to.approach_id);
    ASSERT_EQ(a_in.to, mv.intersection);
    ASSERT_EQ(a_out.from, mv.intersection);
    const int out_side = (static_cast<int>(a_out.side_at_to) + 2) % 4;
    built.insert({mv.intersection, static_cast<int>(a_in.side_at_to), from.index, out_side, to.index});
  }
  EXPECT_EQ(built, expected);
  EXPECT_EQ(net.movements().size(), 48u);

  std::vector<int> all(net.num_lanes());
  for (int i = 0; i < net.num_lanes(); ++i) all[i] = i;
  const auto in = net.all_incoming_lanes();
  const MaskMatrix mm = movement_matrix(net, in, all);
  for (int l : in) EXPECT_EQ(mm.values.row(l).sum(), static_cast<double>(net.lane(l).movements.size()));
}

TEST(MovementMatrix, TransposeIsReverseRelation) {
  // Movements are directed, so the transpose of M(F1,F2) is the relation
  // "(F2[j], F1[i]) is a movement read backwards", not M(F2,F1).
  const Network net = build_network(grid(2, 3, 2));
  std::vector<int> f1, f2;
  for (int i = 0; i < net.num_lanes(); i += 2) f1.push_back(i);
  for (int i = 1; i < net.num_lanes(); i += 3) f2.push_back(i);
  f2.push_back(0);
  const Matrix fwd = movement_matrix(net, f1, f2).values;
  const Matrix rev = movement_matrix(net, f2, f1).values;
  for (std::size_t i = 0; i < f1.size(); ++i)
    for (std::size_t j = 0; j < f2.size(); ++j) {
      EXPECT_EQ(fwd(i, j), net.find_movement(f1[i], f2[j]) >= 0 ? 1.0 : 0.0);
      EXPECT_EQ(rev(j, i), net.find_movement(f2[j], f1[i]) >= 0 ? 1.0 : 0.0);
      EXPECT_EQ(fwd(i, j) * rev(j, i), 0.0);  // no reciprocal movements
    }
  // the symmetric closure is transpose-invariant
  const Matrix sym = fwd + rev.transpose();
  EXPECT_EQ(sym, (rev + fwd.transpose()).transpose());
}

TEST(Routing, SingleLaneApproachIsIdentity) {
  const Network net = build_network(grid(2, 2, 1));
  const MaskMatrix rp = routing_proportion_matrix(net, {});
  for (int l = 0; l < net.num_lanes(); ++l) EXPECT_EQ(rp(l, l), 1.0);
}

TEST(Routing, ExplicitMiddleLaneRow) {
  const Network net = build_network(grid(1, 1));
  RoutingConfig cfg;
  const int ap = net.intersection(0).incoming[0];
  Matrix rows(3, 3);
  rows << 0.5, 0.5, 0.0, 0.25, 0.5, 0.25, 0.0, 0.5, 0.5;
  cfg.explicit_rows[ap] = rows;
  const MaskMatrix rp = routing_proportion_matrix(net, cfg);
  const auto& lanes = net.approach(ap).lanes;
  EXPECT_EQ(rp(lanes[1], lanes[0]), 0.25);
  EXPECT_EQ(rp(lanes[1], lanes[1]), 0.5);
  EXPECT_EQ(rp(lanes[1], lanes[2]), 0.25);
}

TEST(Routing, ExplicitRowsMustSumToOne) {
  const Network net = build_network(grid(1, 1));
  RoutingConfig cfg;
  cfg.explicit_rows[net.intersection(0).incoming[0]] = Matrix::Constant(3, 3, 0.3);
  EXPECT_THROW(routing_proportion_matrix(net, cfg), ValidationError);
  RoutingConfig bad;
  bad.shares = {0.2, 0.6, 0.3};
  EXPECT_THROW(routing_proportion_matrix(net, bad), ValidationError);
}

TEST(Routing, RowsStochasticWithinApproach) {
  for (bool jitter : {false, true}) {
    const Network net = build_network(grid(3, 2));
    RoutingConfig cfg;
    if (jitter) cfg.random_seed = 11;
    const MaskMatrix rp = routing_proportion_matrix(net, cfg);
    for (int l = 0; l < net.num_lanes(); ++l) {
      const auto& lanes = net.approach(net.lane(l).approach_id).lanes;
      double inside = 0.0;
      for (int j = 0; j < net.num_lanes(); ++j) {
        const bool same = std::find(lanes.begin(), lanes.end(), j) != lanes.end();
        if (same) {
          inside += rp(l, j);
          EXPECT_GE(rp(l, j), 0.0);
        } else {
          EXPECT_EQ(rp(l, j), 0.0);
        }
      }
      EXPECT_NEAR(inside, 1.0, 1e-12);
    }
  }
}

TEST(Routing, TurnSharesMapToLanes) {
  // 10/60/30 on a 3-lane approach: left lane, straight lane, right lane.
  const Network net = build_network(grid(1, 2));
  const int ap = net.intersection(1).incoming[static_cast<int>(Side::West)];
  const auto w = lane_shares(net, ap, TurnShares{});
  ASSERT_EQ(w.size(), 3u);
  EXPECT_DOUBLE_EQ(w[0], 0.1);
  EXPECT_DOUBLE_EQ(w[1], 0.6);
  EXPECT_DOUBLE_EQ(w[2], 0.3);
  // 2-lane approach: straight share split between both lanes
  const Network net2 = build_network(grid(1, 2, 2));
  const auto w2 = lane_shares(net2, net2.intersection(1).incoming[static_cast<int>(Side::West)], TurnShares{});
  EXPECT_DOUBLE_EQ(w2[0], 0.4);
  EXPECT_DOUBLE_EQ(w2[1], 0.6);
}

TEST(Masks, NaiveSeriesAndIdentity) {
  const Network net = build_network(series_layout());
  const MaskMatrix naive = naive_movement_mask(net);
  // incoming lanes: W->node0, E->node0, W->node1, E->node1 ... check one linked pair
  const int l = net.approach(net.intersection(0).incoming[static_cast<int>(Side::West)]).lanes[0];
  const int m = net.approach(net.intersection(1).incoming[static_cast<int>(Side::West)]).lanes[0];
  EXPECT_EQ(naive(l, m), 1.0);
  EXPECT_EQ(naive(m, l), 1.0);
  EXPECT_EQ(naive(l, l), 1.0);

  // an isolated node's incoming lanes feed only exit lanes: identity
  const Network single = build_network(grid(1, 1));
  const MaskMatrix id = naive_movement_mask(single);
  EXPECT_EQ(id.values, Matrix::Identity(single.num_incoming_lanes(), single.num_incoming_lanes()));
}

TEST(Masks, NaiveAndAugmentedCounts2x2) {
  const Network net = build_network(grid(2, 2));
  const MaskMatrix naive = naive_movement_mask(net);
  const MaskMatrix aug = augmented_movement_mask(net);
  EXPECT_TRUE(naive.is_binary());
  EXPECT_TRUE(naive.is_symmetric());
  EXPECT_TRUE(aug.is_binary());
  EXPECT_TRUE(aug.is_symmetric());
  for (int i = 0; i < naive.rows(); ++i) {
    EXPECT_EQ(naive(i, i), 1.0);
    EXPECT_EQ(aug(i, i), 1.0);
  }

  // brute count of movements between incoming lanes and of adjacent pairs
  std::size_t inter = 0;
  for (const auto& mv : net.movements()) inter += net.lane(mv.to_lane).is_incoming;
  std::size_t adj_pairs = 0;
  for (int a = 0; a < net.num_incoming_lanes(); ++a)
    for (int b = 0; b < net.num_incoming_lanes(); ++b)
      if (a != b && net.lane(a).approach_id == net.lane(b).approach_id && naive(a, b) == 0.0) ++adj_pairs;
  EXPECT_EQ(naive.nnz(), static_cast<std::size_t>(net.num_incoming_lanes()) + 2 * inter);
  EXPECT_EQ(aug.nnz() - naive.nnz(), adj_pairs);

  // Frozen by hand: each node has two internal exit sides fed by one lane from
  // each of three arrival sides, 4*2*3 = 24 movements; 48 + 2*24 = 96. Each of
  // the 16 incoming approaches adds 3*2 ordered adjacent pairs = 96.
  EXPECT_EQ(inter, 24u);
  EXPECT_EQ(naive.nnz(), 96u);
  EXPECT_EQ(aug.nnz(), 192u);
}

TEST(Masks, AugmentedEqualsNaiveOnSingleLaneApproaches) {
  const Network net = build_network(grid(2, 3, 1));
  EXPECT_EQ(naive_movement_mask(net).values, augmented_movement_mask(net).values);
}

TEST(Masks, AdjacencyBlockOnOneApproach) {
  const Network net = build_network(grid(1, 1));
  const MaskMatrix adj = lane_adjacency(net);
  const MaskMatrix aug = augmented_movement_mask(net);
  const auto& lanes = net.approach(net.intersection(0).incoming[0]).lanes;
  for (int a : lanes)
    for (int b : lanes) {
      EXPECT_EQ(aug(a, b), 1.0);
      EXPECT_EQ(adj(a, b), a == b ? 0.0 : 1.0);
    }
}

TEST(Masks, IntersectionAdjacency) {
  const MaskMatrix m12 = intersection_adjacency(build_network(grid(1, 2)));
  EXPECT_EQ(m12.values, Matrix::Ones(2, 2));
  const MaskMatrix m11 = intersection_adjacency(build_network(grid(1, 1)));
  EXPECT_EQ(m11.values, Matrix::Ones(1, 1));
  const Network n44 = build_network(grid(4, 4));
  const MaskMatrix m44 = intersection_adjacency(n44);
  EXPECT_TRUE(m44.is_symmetric());
  for (int v = 0; v < 16; ++v) {
    const int r = v / 4, c = v % 4;
    const bool interior = r > 0 && r < 3 && c > 0 && c < 3;
    if (interior) EXPECT_EQ(m44.values.row(v).sum(), 5.0);
  }
}

TEST(Phases, NamesRoundTrip) {
  for (PhaseId p : {PhaseId::NS, PhaseId::NSL, PhaseId::EW, PhaseId::EWL})
    EXPECT_EQ(phase_from_string(to_string(p)), p);
  EXPECT_THROW(phase_from_string("XX"), ValidationError);
}
