#include "tsc/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace tsc {

namespace {

constexpr std::array<Side, 4> kSides{Side::North, Side::East, Side::South, Side::West};

int side_index(Side s) { return static_cast<int>(s); }

Side exit_side(Side arrival, Turn t) {
  const int s = side_index(arrival);
  switch (t) {
    case Turn::Left: return static_cast<Side>((s + 1) % 4);
    case Turn::Straight: return static_cast<Side>((s + 2) % 4);
    case Turn::Right: return static_cast<Side>((s + 3) % 4);
  }
  return arrival;
}

// Turns served by lane `idx` of an n-lane approach.
std::vector<Turn> lane_turns(int n, int idx) {
  if (n == 1) return {Turn::Left, Turn::Straight, Turn::Right};
  if (n == 2) return idx == 0 ? std::vector<Turn>{Turn::Left, Turn::Straight}
                              : std::vector<Turn>{Turn::Straight, Turn::Right};
  if (idx == 0) return {Turn::Left};
  if (idx == n - 1) return {Turn::Right};
  return {Turn::Straight};
}

int target_lane_index(int n, int idx, Turn t) {
  switch (t) {
    case Turn::Left: return 0;
    case Turn::Right: return n - 1;
    case Turn::Straight: return std::min(idx, n - 1);
  }
  return 0;
}

// Side of `to` as seen from `from`; y grows southward.
Side side_of(const LayoutSpec::Node& from, const LayoutSpec::Node& to) {
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  if (std::abs(dx) >= std::abs(dy)) return dx > 0 ? Side::East : Side::West;
  return dy > 0 ? Side::South : Side::North;
}

Side opposite(Side s) { return static_cast<Side>((side_index(s) + 2) % 4); }

}  // namespace

const char* to_string(PhaseId p) {
  switch (p) {
    case PhaseId::NS: return "NS";
    case PhaseId::NSL: return "NSL";
    case PhaseId::EW: return "EW";
    case PhaseId::EWL: return "EWL";
    case PhaseId::AllRed: return "ALLRED";
  }
  return "?";
}

const char* to_string(Turn t) {
  switch (t) {
    case Turn::Left: return "left";
    case Turn::Straight: return "straight";
    case Turn::Right: return "right";
  }
  return "?";
}

PhaseId phase_from_string(const std::string& name) {
  for (int p = 0; p < kNumPhases; ++p) {
    if (name == to_string(static_cast<PhaseId>(p))) return static_cast<PhaseId>(p);
  }
  throw ValidationError({"unknown phase '" + name + "'"});
}

namespace {
std::string join_issues(const std::vector<std::string>& issues) {
  std::ostringstream os;
  os << "validation failed";
  for (const auto& s : issues) os << "; " << s;
  return os.str();
}
}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

double TurnShares::of(Turn t) const {
  switch (t) {
    case Turn::Left: return left;
    case Turn::Straight: return straight;
    case Turn::Right: return right;
  }
  return 0.0;
}

namespace {
void check_shares(const TurnShares& s, const std::string& where, std::vector<std::string>& issues) {
  if (s.left < 0 || s.straight < 0 || s.right < 0) issues.push_back(where + ": negative turn share");
  if (std::abs(s.left + s.straight + s.right - 1.0) > 1e-9) issues.push_back(where + ": turn shares must sum to 1");
}
}  // namespace

void validate(const NetworkSpec& spec) {
  std::vector<std::string> issues;
  if (spec.rows < 1) issues.push_back("rows must be >= 1");
  if (spec.cols < 1) issues.push_back("cols must be >= 1");
  if (spec.lanes_per_approach < 1) issues.push_back("lanes_per_approach must be >= 1");
  if (!(spec.approach_length_ew_m > 0)) issues.push_back("approach_length_ew_m must be > 0");
  if (!(spec.approach_length_ns_m > 0)) issues.push_back("approach_length_ns_m must be > 0");
  if (!(spec.discharge_rate_vps > 0)) issues.push_back("discharge_rate_vps must be > 0");
  if (!(spec.jam_spacing_m > 0)) issues.push_back("jam_spacing_m must be > 0");
  if (spec.lane_capacity && *spec.lane_capacity < 1) issues.push_back("lane_capacity must be >= 1");
  check_shares(spec.turn_shares, "turn_shares", issues);
  if (!issues.empty()) throw ValidationError(std::move(issues));
}

LayoutSpec grid_layout(const NetworkSpec& spec) {
  validate(spec);
  LayoutSpec layout;
  layout.lanes_per_approach = spec.lanes_per_approach;
  layout.discharge_rate_vps = spec.discharge_rate_vps;
  layout.jam_spacing_m = spec.jam_spacing_m;
  layout.lane_capacity = spec.lane_capacity;
  const double ew = spec.approach_length_ew_m;
  const double ns = spec.approach_length_ns_m;
  auto id_of = [&](int r, int c) { return r * spec.cols + c; };
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) layout.nodes.push_back({c * ew, r * ns, true, r, c});
  }
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      if (c + 1 < spec.cols) layout.edges.emplace_back(id_of(r, c), id_of(r, c + 1));
      if (r + 1 < spec.rows) layout.edges.emplace_back(id_of(r, c), id_of(r + 1, c));
    }
  }
  auto add_external = [&](int r, int c, int attach) {
    layout.nodes.push_back({c * ew, r * ns, false, r, c});
    layout.edges.emplace_back(static_cast<int>(layout.nodes.size()) - 1, attach);
  };
  for (int c = 0; c < spec.cols; ++c) add_external(-1, c, id_of(0, c));
  for (int c = 0; c < spec.cols; ++c) add_external(spec.rows, c, id_of(spec.rows - 1, c));
  for (int r = 0; r < spec.rows; ++r) add_external(r, -1, id_of(r, 0));
  for (int r = 0; r < spec.rows; ++r) add_external(r, spec.cols, id_of(r, spec.cols - 1));
  return layout;
}

Network build_network(const NetworkSpec& spec) { return build_network(grid_layout(spec)); }

Network build_network(const LayoutSpec& layout) {
  std::vector<std::string> issues;
  if (layout.lanes_per_approach < 1) issues.push_back("lanes_per_approach must be >= 1");
  if (!(layout.discharge_rate_vps > 0)) issues.push_back("discharge_rate_vps must be > 0");
  if (!(layout.jam_spacing_m > 0)) issues.push_back("jam_spacing_m must be > 0");
  const int n_nodes = static_cast<int>(layout.nodes.size());
  for (const auto& [a, b] : layout.edges) {
    if (a < 0 || b < 0 || a >= n_nodes || b >= n_nodes || a == b) {
      issues.push_back("edge (" + std::to_string(a) + "," + std::to_string(b) + ") is invalid");
      continue;
    }
    if (!layout.nodes[a].internal && !layout.nodes[b].internal)
      issues.push_back("edge (" + std::to_string(a) + "," + std::to_string(b) + ") joins two external nodes");
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));

  Network net;
  // Internal nodes first, preserving relative order.
  std::vector<int> remap(n_nodes, -1);
  int next = 0;
  for (int i = 0; i < n_nodes; ++i)
    if (layout.nodes[i].internal) remap[i] = next++;
  net.num_internal_ = next;
  for (int i = 0; i < n_nodes; ++i)
    if (!layout.nodes[i].internal) remap[i] = next++;
  net.intersections_.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    const auto& nd = layout.nodes[i];
    auto& it = net.intersections_[remap[i]];
    it.id = remap[i];
    it.internal = nd.internal;
    it.row = nd.row;
    it.col = nd.col;
    it.x = nd.x;
    it.y = nd.y;
  }

  struct Draft {
    int from, to;
    Side side_at_to;
    double length;
  };
  std::vector<Draft> drafts;
  for (const auto& [a0, b0] : layout.edges) {
    const int a = remap[a0], b = remap[b0];
    const auto& na = layout.nodes[a0];
    const auto& nb = layout.nodes[b0];
    const double len = std::hypot(na.x - nb.x, na.y - nb.y);
    if (!(len > 0)) {
      issues.push_back("edge (" + std::to_string(a0) + "," + std::to_string(b0) + ") has non-positive length");
      continue;
    }
    drafts.push_back({a, b, side_of(nb, na), len});
    drafts.push_back({b, a, side_of(na, nb), len});
  }
  // At most one approach per (node, side).
  for (const auto& d : drafts) {
    auto& slot = net.intersections_[d.to].incoming[side_index(d.side_at_to)];
    if (slot != -1) issues.push_back("intersection " + std::to_string(d.to) + " has two approaches on one side");
    slot = 0;
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
  for (auto& it : net.intersections_) it.incoming.fill(-1);

  auto is_incoming = [&](const Draft& d) { return net.intersections_[d.to].internal; };
  auto key = [&](const Draft& d) {
    // incoming approaches grouped by downstream node, then side; exits by upstream node
    return is_incoming(d) ? std::tuple(0, d.to, side_index(d.side_at_to))
                          : std::tuple(1, d.from, side_index(opposite(d.side_at_to)));
  };
  std::sort(drafts.begin(), drafts.end(), [&](const Draft& x, const Draft& y) { return key(x) < key(y); });

  const int n = layout.lanes_per_approach;
  for (const auto& d : drafts) {
    Approach ap;
    ap.id = static_cast<int>(net.approaches_.size());
    ap.from = d.from;
    ap.to = d.to;
    ap.side_at_to = d.side_at_to;
    ap.length = d.length;
    const bool from_int = net.intersections_[d.from].internal;
    const bool to_int = net.intersections_[d.to].internal;
    ap.kind = !from_int ? ApproachKind::Entry : (!to_int ? ApproachKind::Exit : ApproachKind::Internal);
    const int cap = layout.lane_capacity.value_or(
        std::max(1, static_cast<int>(std::floor(d.length / layout.jam_spacing_m))));
    for (int k = 0; k < n; ++k) {
      Lane lane;
      lane.id = static_cast<int>(net.lanes_.size());
      lane.approach_id = ap.id;
      lane.index = k;
      lane.length = d.length;
      lane.capacity = cap;
      lane.is_entry = ap.kind == ApproachKind::Entry;
      lane.is_incoming = to_int;
      if (to_int) ++net.num_incoming_;
      ap.lanes.push_back(lane.id);
      net.lanes_.push_back(std::move(lane));
    }
    net.intersections_[d.to].incoming[side_index(d.side_at_to)] = ap.id;
    net.intersections_[d.from].outgoing[side_index(opposite(d.side_at_to))] = ap.id;
    net.approaches_.push_back(std::move(ap));
  }

  const int v_int = net.num_internal_;
  net.in_lanes_.assign(v_int, {});
  net.out_lanes_.assign(v_int, {});
  net.neighbors_.assign(v_int, {});
  net.phase_table_.resize(v_int);
  for (int v = 0; v < v_int; ++v) {
    const auto& it = net.intersections_[v];
    for (Side s : kSides) {
      const int in_ap = it.incoming[side_index(s)];
      if (in_ap >= 0) {
        for (int l : net.approaches_[in_ap].lanes) net.in_lanes_[v].push_back(l);
      }
      const int out_ap = it.outgoing[side_index(s)];
      if (out_ap >= 0) {
        for (int l : net.approaches_[out_ap].lanes) net.out_lanes_[v].push_back(l);
        const int u = net.approaches_[out_ap].to;
        if (net.intersections_[u].internal) net.neighbors_[v].push_back(u);
      }
    }
    std::sort(net.out_lanes_[v].begin(), net.out_lanes_[v].end());
    std::sort(net.neighbors_[v].begin(), net.neighbors_[v].end());
    for (Side s : kSides) {
      const int in_ap = it.incoming[side_index(s)];
      if (in_ap < 0) continue;
      for (int l : net.approaches_[in_ap].lanes) {
        const int idx = net.lanes_[l].index;
        for (Turn t : lane_turns(n, idx)) {
          const int out_ap = it.outgoing[side_index(exit_side(s, t))];
          if (out_ap < 0) continue;
          Movement mv;
          mv.id = static_cast<int>(net.movements_.size());
          mv.from_lane = l;
          mv.to_lane = net.approaches_[out_ap].lanes[target_lane_index(n, idx, t)];
          mv.turn = t;
          mv.discharge_rate = layout.discharge_rate_vps;
          mv.intersection = v;
          net.lanes_[l].movements.push_back(mv.id);
          net.movement_index_[{mv.from_lane, mv.to_lane}] = mv.id;
          net.movements_.push_back(mv);
        }
      }
    }
    for (int p = 0; p < kNumPhases; ++p) {
      Phase& ph = net.phase_table_[v][p];
      ph.id = static_cast<PhaseId>(p);
      const bool ns_axis = ph.id == PhaseId::NS || ph.id == PhaseId::NSL;
      const Turn served = (ph.id == PhaseId::NS || ph.id == PhaseId::EW) ? Turn::Straight : Turn::Left;
      for (int l : net.in_lanes_[v]) {
        const Side s = net.approaches_[net.lanes_[l].approach_id].side_at_to;
        const bool on_axis = ns_axis ? (s == Side::North || s == Side::South) : (s == Side::East || s == Side::West);
        bool lane_green = false;
        for (int m : net.lanes_[l].movements) {
          const Turn t = net.movements_[m].turn;
          if (t == Turn::Right || (on_axis && t == served)) {
            ph.permitted_movements.push_back(m);
            lane_green = true;
          }
        }
        if (lane_green) ph.permitted_lanes.push_back(l);
      }
    }
  }
  net.check_invariants();
  return net;
}

int Network::max_incoming_lanes() const {
  std::size_t m = 0;
  for (const auto& in : in_lanes_) m = std::max(m, in.size());
  return static_cast<int>(m);
}

int Network::find_movement(int from_lane, int to_lane) const {
  const auto it = movement_index_.find({from_lane, to_lane});
  return it == movement_index_.end() ? -1 : it->second;
}

std::vector<int> Network::entry_lanes() const {
  std::vector<int> out;
  for (const auto& l : lanes_)
    if (l.is_entry) out.push_back(l.id);
  return out;
}

std::vector<int> Network::all_incoming_lanes() const {
  std::vector<int> out(num_incoming_);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

void Network::check_invariants() const {
  std::vector<std::string> issues;
  for (const auto& ap : approaches_) {
    const bool fi = intersections_[ap.from].internal;
    const bool ti = intersections_[ap.to].internal;
    const ApproachKind expect = !fi ? ApproachKind::Entry : (!ti ? ApproachKind::Exit : ApproachKind::Internal);
    if (ap.kind != expect) issues.push_back("approach " + std::to_string(ap.id) + " category mismatch");
  }
  for (const auto& l : lanes_) {
    if (!(l.length > 0)) issues.push_back("lane " + std::to_string(l.id) + " has non-positive length");
    if (l.capacity < 1) issues.push_back("lane " + std::to_string(l.id) + " has capacity < 1");
    if (l.is_incoming != (l.id < num_incoming_)) issues.push_back("lane ids are not dense over incoming lanes");
    if (l.is_incoming && l.movements.empty())
      issues.push_back("incoming lane " + std::to_string(l.id) + " has no movement");
  }
  for (const auto& m : movements_) {
    if (!(m.discharge_rate > 0)) issues.push_back("movement " + std::to_string(m.id) + " has c <= 0");
  }
  if (movement_index_.size() != movements_.size()) issues.push_back("duplicate (from_lane, to_lane) movement");
  if (!issues.empty()) throw ValidationError(std::move(issues));
}

std::size_t MaskMatrix::nnz() const {
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) count += values.data()[i] != 0.0;
  return count;
}

bool MaskMatrix::is_binary() const {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

bool MaskMatrix::is_symmetric() const { return values.rows() == values.cols() && values == values.transpose(); }

MaskMatrix movement_matrix(const Network& net, std::span<const int> f1, std::span<const int> f2) {
  MaskMatrix m{Matrix::Zero(static_cast<Eigen::Index>(f1.size()), static_cast<Eigen::Index>(f2.size()))};
  for (std::size_t i = 0; i < f1.size(); ++i)
    for (std::size_t j = 0; j < f2.size(); ++j)
      if (net.find_movement(f1[i], f2[j]) >= 0) m.values(i, j) = 1.0;
  return m;
}

std::vector<double> lane_shares(const Network& net, int approach_id, const TurnShares& shares) {
  const auto& ap = net.approach(approach_id);
  const int n = static_cast<int>(ap.lanes.size());
  std::array<int, 3> lanes_per_turn{0, 0, 0};
  for (int k = 0; k < n; ++k)
    for (Turn t : lane_turns(n, k)) ++lanes_per_turn[static_cast<int>(t)];
  std::vector<double> w(n, 0.0);
  for (int k = 0; k < n; ++k)
    for (Turn t : lane_turns(n, k)) w[k] += shares.of(t) / lanes_per_turn[static_cast<int>(t)];
  return w;
}

Routing make_routing(const Network& net, const RoutingConfig& config) {
  std::vector<std::string> issues;
  check_shares(config.shares, "routing shares", issues);
  if (config.jitter < 0 || config.jitter >= 1) issues.push_back("routing jitter must be in [0, 1)");
  if (!issues.empty()) throw ValidationError(std::move(issues));

  Routing out;
  out.shares.assign(net.num_internal(), config.shares);
  if (config.random_seed) {
    std::mt19937_64 rng(*config.random_seed);
    std::uniform_real_distribution<double> u(-config.jitter, config.jitter);
    for (auto& s : out.shares) {
      TurnShares j{s.left * (1 + u(rng)), s.straight * (1 + u(rng)), s.right * (1 + u(rng))};
      const double total = j.left + j.straight + j.right;
      s = {j.left / total, j.straight / total, j.right / total};
    }
  }
  const int n_all = net.num_lanes();
  out.rp.values = Matrix::Zero(n_all, n_all);
  for (const auto& ap : net.approaches()) {
    const int n = static_cast<int>(ap.lanes.size());
    if (const auto it = config.explicit_rows.find(ap.id); it != config.explicit_rows.end()) {
      const Matrix& rows = it->second;
      if (rows.rows() != n || rows.cols() != n) {
        issues.push_back("explicit routing rows for approach " + std::to_string(ap.id) + " have wrong shape");
        continue;
      }
      for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
          if (rows(i, j) < 0 || rows(i, j) > 1) issues.push_back("routing entry outside [0,1]");
          sum += rows(i, j);
          out.rp.values(ap.lanes[i], ap.lanes[j]) = rows(i, j);
        }
        if (std::abs(sum - 1.0) > 1e-12)
          issues.push_back("routing row of lane " + std::to_string(ap.lanes[i]) + " does not sum to 1");
      }
      continue;
    }
    if (ap.kind == ApproachKind::Exit) {
      for (int l : ap.lanes) out.rp.values(l, l) = 1.0;
      continue;
    }
    const auto w = lane_shares(net, ap.id, out.shares[ap.to]);
    for (int l : ap.lanes)
      for (int j = 0; j < n; ++j) out.rp.values(l, ap.lanes[j]) = w[j];
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return out;
}

MaskMatrix routing_proportion_matrix(const Network& net, const RoutingConfig& config) {
  return make_routing(net, config).rp;
}

MaskMatrix naive_movement_mask(const Network& net) {
  const auto in = net.all_incoming_lanes();
  MaskMatrix m = movement_matrix(net, in, in);
  Matrix sum = m.values + m.values.transpose() + Matrix::Identity(m.rows(), m.cols());
  return {sum.cwiseMin(1.0)};
}

MaskMatrix lane_adjacency(const Network& net) {
  const int n = net.num_incoming_lanes();
  MaskMatrix adj{Matrix::Zero(n, n)};
  for (int l = 0; l < n; ++l)
    for (int k : net.approach(net.lane(l).approach_id).lanes)
      if (k != l) adj.values(l, k) = 1.0;
  return adj;
}

MaskMatrix augmented_movement_mask(const Network& net) {
  Matrix sum = naive_movement_mask(net).values + lane_adjacency(net).values;
  return {sum.cwiseMin(1.0)};
}

MaskMatrix intersection_adjacency(const Network& net) {
  const int v = net.num_internal();
  MaskMatrix m{Matrix::Identity(v, v)};
  for (int i = 0; i < v; ++i)
    for (int u : net.neighbors(i)) m.values(i, u) = 1.0;
  return m;
}

}  // namespace tsc
