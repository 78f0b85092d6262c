#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tsc/ga2.hpp"
#include "tsc/partition.hpp"

using namespace tsc;
using namespace tsc::nn;

namespace {

NetworkSpec grid(int rows, int cols, int lanes = 3) {
  NetworkSpec s;
  s.rows = rows;
  s.cols = cols;
  s.lanes_per_approach = lanes;
  return s;
}

Matrix random_counts(int r, int c, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 6);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Straight from the definition, one (i, j) pair at a time.
Matrix naive_layer(const Matrix& h, const Matrix& mask, const ParamStore& store, const std::string& prefix,
                   int heads) {
  const int n = static_cast<int>(h.rows());
  Matrix out;
  for (int k = 0; k < heads; ++k) {
    const Matrix& W = store[store.find(prefix + ".head" + std::to_string(k) + ".W")].value;
    const Matrix& a = store[store.find(prefix + ".head" + std::to_string(k) + ".a")].value;
    const int fp = static_cast<int>(W.cols());
    if (k == 0) out = Matrix::Zero(n, heads * fp);
    for (int i = 0; i < n; ++i) {
      std::vector<double> e(n, 0.0);
      double denom = 0.0;
      for (int j = 0; j < n; ++j) {
        if (mask(i, j) == 0) continue;
        double s = 0.0;
        for (int f = 0; f < fp; ++f) {
          double zi = 0.0, zj = 0.0;
          for (int c = 0; c < h.cols(); ++c) {
            zi += h(i, c) * W(c, f);
            zj += h(j, c) * W(c, f);
          }
          s += a(f, 0) * zi + a(fp + f, 0) * zj;
        }
        e[j] = std::exp(s > 0 ? s : 0.2 * s);
        denom += e[j];
      }
      for (int j = 0; j < n; ++j) {
        if (mask(i, j) == 0) continue;
        for (int f = 0; f < fp; ++f) {
          double zj = 0.0;
          for (int c = 0; c < h.cols(); ++c) zj += h(j, c) * W(c, f);
          out(i, k * fp + f) += e[j] / denom * zj;
        }
      }
    }
  }
  return out;
}

struct Fixture {
  Network net;
  ParamStore store;
  std::unique_ptr<Ga2Encoder> enc;

  Fixture(const NetworkSpec& spec, Ga2Config cfg, std::uint64_t seed = 1) : net(build_network(spec)) {
    std::mt19937_64 rng(seed);
    enc = std::make_unique<Ga2Encoder>(net, cfg, store, rng);
  }
  Matrix lane(const Matrix& s, int graphs = 1) {
    Tape t(false);
    return t.value(enc->embed_lane_states(t, store, t.constant(s), graphs));
  }
  Matrix itsx(const Matrix& s, int graphs = 1) {
    Tape t(false);
    return t.value(enc->embed_itsx_states(t, store, t.constant(s), graphs));
  }
};

}  // namespace

TEST(Ga2Embed, ZeroInputGivesZeroOutput) {
  Fixture f(grid(2, 2), Ga2Config{});
  const Matrix hl = f.lane(Matrix::Zero(f.net.num_incoming_lanes(), 5));
  const Matrix hi = f.itsx(Matrix::Zero(4, 24));
  EXPECT_EQ(hl.cols(), 128);
  EXPECT_EQ(hi.cols(), 128);
  EXPECT_TRUE((hl.array() == 0.0).all());
  EXPECT_TRUE((hi.array() == 0.0).all());
}

TEST(Ga2Embed, DimensionMismatchThrows) {
  Fixture f(grid(2, 2), Ga2Config{});
  EXPECT_THROW(f.lane(Matrix::Zero(f.net.num_incoming_lanes(), 4)), std::invalid_argument);
  EXPECT_THROW(f.lane(Matrix::Zero(f.net.num_incoming_lanes() + 1, 5)), std::invalid_argument);
  EXPECT_THROW(f.itsx(Matrix::Zero(4, 23)), std::invalid_argument);
}

TEST(Ga2Embed, NaiveAndAugCoincideOnSingleLaneApproaches) {
  Ga2Config naive;
  Ga2Config aug;
  aug.mask = MaskKind::Augmented;
  Fixture a(grid(2, 2, 1), naive, 9);
  Fixture b(grid(2, 2, 1), aug, 9);
  std::mt19937_64 rng(3);
  const Matrix s = random_counts(a.net.num_incoming_lanes(), 5, rng);
  EXPECT_EQ(a.lane(s), b.lane(s));
}

TEST(Ga2Embed, AugDiffersWhenApproachesHaveSeveralLanes) {
  Ga2Config aug;
  aug.mask = MaskKind::Augmented;
  Fixture a(grid(2, 2), Ga2Config{}, 9);
  Fixture b(grid(2, 2), aug, 9);
  std::mt19937_64 rng(3);
  const Matrix s = random_counts(a.net.num_incoming_lanes(), 5, rng);
  EXPECT_GT((a.lane(s) - b.lane(s)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Ga2Embed, MatchesPerDefinitionTwoLayerEvaluation) {
  for (MaskKind mk : {MaskKind::Naive, MaskKind::Augmented}) {
    Ga2Config cfg;
    cfg.mask = mk;
    Fixture f(grid(2, 2), cfg, 17);
    std::mt19937_64 rng(5);
    const Matrix s = random_counts(f.net.num_incoming_lanes(), 5, rng);
    const Matrix mask =
        mk == MaskKind::Naive ? naive_movement_mask(f.net).values : augmented_movement_mask(f.net).values;
    const Matrix ref = naive_layer(naive_layer(s, mask, f.store, "ga2.lane1", 8), mask, f.store, "ga2.lane2", 8);
    EXPECT_LE((f.lane(s) - ref).cwiseAbs().maxCoeff(), 1e-12);

    const Matrix m = random_counts(4, 24, rng);
    const Matrix im = intersection_adjacency(f.net).values;
    const Matrix iref = naive_layer(naive_layer(m, im, f.store, "ga2.itsx1", 8), im, f.store, "ga2.itsx2", 8);
    EXPECT_LE((f.itsx(m) - iref).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Ga2Embed, SingleIntersectionSeesOnlyItself) {
  Fixture f(grid(1, 1), Ga2Config{}, 4);
  std::mt19937_64 rng(8);
  const Matrix m = random_counts(1, 24, rng);
  const Matrix self = Matrix::Ones(1, 1);
  // softmax over one neighbour is 1: each layer reduces to h W per head.
  Matrix ref = m;
  for (const char* layer : {"ga2.itsx1", "ga2.itsx2"}) {
    const int fp = layer[8] == '1' ? 8 : 16;
    Matrix next(1, 8 * fp);
    for (int k = 0; k < 8; ++k)
      next.block(0, k * fp, 1, fp) =
          ref * f.store[f.store.find(std::string(layer) + ".head" + std::to_string(k) + ".W")].value;
    ref = next;
  }
  EXPECT_LE((f.itsx(m) - ref).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((f.itsx(m) - naive_layer(naive_layer(m, self, f.store, "ga2.itsx1", 8), self, f.store, "ga2.itsx2", 8))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(Ga2Embed, SingleCellIsDefined) {
  Ga2Config cfg;
  cfg.cells = 1;
  Fixture f(grid(2, 2), cfg);
  std::mt19937_64 rng(1);
  const Matrix h = f.lane(random_counts(f.net.num_incoming_lanes(), 1, rng));
  EXPECT_EQ(h.cols(), 128);
  EXPECT_TRUE(h.allFinite());
}

TEST(Ga2Embed, StackedStatesMatchSeparateRuns) {
  Fixture f(grid(2, 2), Ga2Config{});
  std::mt19937_64 rng(2);
  const int n = f.net.num_incoming_lanes();
  const Matrix s0 = random_counts(n, 5, rng), s1 = random_counts(n, 5, rng);
  Matrix both(2 * n, 5);
  both << s0, s1;
  const Matrix h = f.lane(both, 2);
  EXPECT_EQ(Matrix(h.topRows(n)), f.lane(s0));
  EXPECT_EQ(Matrix(h.bottomRows(n)), f.lane(s1));
}

TEST(Ga2Embed, TwoHopReceptiveField) {
  for (MaskKind mk : {MaskKind::Naive, MaskKind::Augmented}) {
    Ga2Config cfg;
    cfg.mask = mk;
    Fixture f(grid(3, 3), cfg, 6);
    const int n = f.net.num_incoming_lanes();
    const Matrix mask =
        mk == MaskKind::Naive ? naive_movement_mask(f.net).values : augmented_movement_mask(f.net).values;
    const Matrix reach = mask * mask;
    std::mt19937_64 rng(11);
    const Matrix s = random_counts(n, 5, rng);
    const Matrix base = f.lane(s);
    int changed_far = 0, changed_near = 0;
    for (int l = 0; l < n; l += 5) {
      Matrix p = s;
      p(l, 0) += 3;
      const Matrix h = f.lane(p);
      for (int i = 0; i < n; ++i) {
        const bool diff = (h.row(i) - base.row(i)).cwiseAbs().maxCoeff() > 0.0;
        if (reach(i, l) == 0) changed_far += diff;
        else changed_near += diff;
      }
    }
    EXPECT_EQ(changed_far, 0);
    EXPECT_GT(changed_near, 0);
  }
}

TEST(Ga2Obs, WidthForSingleIntersection) {
  const Network net = build_network(grid(1, 1, 2));
  ASSERT_EQ(net.incoming_lanes(0).size(), 8u);
  const auto padded = pad_regions(net, {Region{0, 0, {0}}}, 1, 8);
  const auto layout = observation_layout(net, padded);
  EXPECT_EQ(layout.width(128, 128), 8 * 128 + 128);
  const auto obs = build_observations(Matrix::Ones(8, 128), Matrix::Ones(1, 128), layout);
  ASSERT_EQ(obs.size(), 1u);
  EXPECT_EQ(obs[0].size(), 8 * 128 + 128);
}

TEST(Ga2Obs, GridWidthAndDummyBlocks) {
  const Network net = build_network(grid(2, 2));
  // Region 1 has three real members and one dummy slot.
  const std::vector<Region> cover = {Region{0, 2, {2}}, Region{1, 1, {1, 0, 3}}};
  ASSERT_TRUE(validate_partition(net, cover).empty());
  const auto padded = pad_regions(net, cover, 4, 12);
  const auto layout = observation_layout(net, padded);
  EXPECT_EQ(layout.width(128, 128), 4 * 12 * 128 + 4 * 128);
  EXPECT_EQ(layout.width(128, 128), 6656);

  std::mt19937_64 rng(4);
  const Matrix hl = random_counts(net.num_incoming_lanes(), 128, rng).array() + 1.0;
  const Matrix hi = random_counts(4, 128, rng).array() + 1.0;
  const auto obs = build_observations(hl, hi, layout);
  ASSERT_EQ(obs.size(), 2u);
  const Vector& o = obs[1];
  // Dummy lane block of slot 3 and its intersection block are zero; real ones are not.
  EXPECT_TRUE((o.segment(3 * 12 * 128, 12 * 128).array() == 0.0).all());
  EXPECT_TRUE((o.segment(4 * 12 * 128 + 3 * 128, 128).array() == 0.0).all());
  EXPECT_TRUE((o.segment(0, 12 * 128).array() != 0.0).all());
  // Region 0 has three dummy slots.
  EXPECT_TRUE((obs[0].segment(12 * 128, 3 * 12 * 128).array() == 0.0).all());
}

TEST(Ga2Obs, PureGatherBitExact) {
  const Network net = build_network(grid(2, 2));
  const std::vector<Region> regions = {Region{0, 0, {0, 1, 2}}, Region{1, 3, {3}}};
  const auto layout = observation_layout(net, pad_regions(net, regions, 4, 12));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix hl(net.num_incoming_lanes(), 128), hi(4, 128);
  for (Eigen::Index i = 0; i < hl.size(); ++i) hl.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < hi.size(); ++i) hi.data()[i] = n(rng);
  const auto obs = build_observations(hl, hi, layout);
  for (int r = 0; r < 2; ++r) {
    int slot = 0;
    for (int v : regions[r].members) {
      const auto& in = net.incoming_lanes(v);
      for (std::size_t k = 0; k < in.size(); ++k)
        EXPECT_EQ(Vector(obs[r].segment((slot * 12 + static_cast<int>(k)) * 128, 128)),
                  Vector(hl.row(in[k]).transpose()));
      EXPECT_EQ(Vector(obs[r].segment(4 * 12 * 128 + slot * 128, 128)), Vector(hi.row(v).transpose()));
      ++slot;
    }
  }
}

TEST(Ga2Obs, StackedRowsAreRegionMajor) {
  const Network net = build_network(grid(2, 2));
  const std::vector<Region> regions = {Region{0, 0, {0, 1}}, Region{1, 3, {3, 2}}};
  const auto layout = observation_layout(net, pad_regions(net, regions, 2, 12));
  const int n = net.num_incoming_lanes();
  std::mt19937_64 rng(9);
  const Matrix hl = random_counts(3 * n, 4, rng), hi = random_counts(12, 4, rng);
  Tape t(false);
  const Matrix obs = t.value(build_observations(t, t.constant(hl), t.constant(hi), layout, 3, n, 4));
  ASSERT_EQ(obs.rows(), 6);
  for (int g = 0; g < 3; ++g) {
    const auto single = build_observations(Matrix(hl.middleRows(g * n, n)), Matrix(hi.middleRows(g * 4, 4)), layout);
    for (int r = 0; r < 2; ++r) EXPECT_EQ(Vector(obs.row(r * 3 + g).transpose()), single[r]);
  }
}

TEST(Ga2Obs, UnknownIntersectionThrows) {
  const Network net = build_network(grid(2, 2));
  PaddedRegion p;
  p.region = Region{0, 9, {9}};
  p.slots = {9};
  p.lane_slots = {std::vector<int>(12, -1)};
  EXPECT_THROW(observation_layout(net, {p}), std::invalid_argument);
}

TEST(Ga2Config, MaskNames) {
  EXPECT_EQ(mask_kind_from_string("naive"), MaskKind::Naive);
  EXPECT_EQ(mask_kind_from_string("aug"), MaskKind::Augmented);
  EXPECT_THROW(mask_kind_from_string("full"), ValidationError);
}
