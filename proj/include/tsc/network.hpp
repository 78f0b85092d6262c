#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsc/matrix.hpp"

namespace tsc {

enum class Side : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };
enum class Turn : std::uint8_t { Left = 0, Straight = 1, Right = 2 };
enum class ApproachKind : std::uint8_t { Entry, Exit, Internal };

/// Signal phases of a four-legged intersection. AllRed is the clearance
/// interval and never appears in a phase table.
enum class PhaseId : std::uint8_t { NS = 0, NSL = 1, EW = 2, EWL = 3, AllRed = 4 };
inline constexpr int kNumPhases = 4;

const char* to_string(PhaseId p);
const char* to_string(Turn t);
PhaseId phase_from_string(const std::string& name);

/// Raised for malformed specs and configs; carries every offending field.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

struct Intersection {
  int id = -1;
  bool internal = false;
  int row = 0;
  int col = 0;
  double x = 0.0;
  double y = 0.0;
  std::array<int, 4> incoming{-1, -1, -1, -1};  // approach id arriving from each side
  std::array<int, 4> outgoing{-1, -1, -1, -1};  // approach id leaving through each side
};

struct Approach {
  int id = -1;
  int from = -1;
  int to = -1;
  Side side_at_to = Side::North;  // side of `to` the approach arrives on
  ApproachKind kind = ApproachKind::Internal;
  double length = 0.0;
  std::vector<int> lanes;  // index 0 is the innermost (left-turn) lane
};

struct Lane {
  int id = -1;
  int approach_id = -1;
  int index = 0;
  double length = 0.0;
  int capacity = 1;  // wave_max
  bool is_entry = false;
  bool is_incoming = false;  // ends at an internal intersection
  std::vector<int> movements;
};

struct Movement {
  int id = -1;
  int from_lane = -1;
  int to_lane = -1;
  Turn turn = Turn::Straight;
  double discharge_rate = 1.0;  // vehicles per second
  int intersection = -1;
};

struct Phase {
  PhaseId id = PhaseId::NS;
  std::vector<int> permitted_movements;
  std::vector<int> permitted_lanes;  // lanes with a(l) = 1
};

struct TurnShares {
  double left = 0.1;
  double straight = 0.6;
  double right = 0.3;
  double of(Turn t) const;
};

/// Rectangular grid description. Internal intersections are rows x cols;
/// one external intersection is attached to every boundary side.
struct NetworkSpec {
  int rows = 2;
  int cols = 2;
  int lanes_per_approach = 3;
  double approach_length_ew_m = 300.0;
  double approach_length_ns_m = 300.0;
  double discharge_rate_vps = 1.0;
  TurnShares turn_shares;
  double jam_spacing_m = 7.5;
  std::optional<int> lane_capacity;  // overrides floor(length / jam_spacing)
};

/// Node/edge layout consumed by the generic builder. Edges are undirected and
/// become one approach in each direction. Sides are derived from coordinates.
struct LayoutSpec {
  struct Node {
    double x = 0.0;
    double y = 0.0;
    bool internal = true;
    int row = 0;
    int col = 0;
  };
  std::vector<Node> nodes;
  std::vector<std::pair<int, int>> edges;
  int lanes_per_approach = 3;
  double discharge_rate_vps = 1.0;
  double jam_spacing_m = 7.5;
  std::optional<int> lane_capacity;
};

class Network {
 public:
  const std::vector<Intersection>& intersections() const { return intersections_; }
  const std::vector<Approach>& approaches() const { return approaches_; }
  const std::vector<Lane>& lanes() const { return lanes_; }
  const std::vector<Movement>& movements() const { return movements_; }

  const Intersection& intersection(int id) const { return intersections_.at(id); }
  const Approach& approach(int id) const { return approaches_.at(id); }
  const Lane& lane(int id) const { return lanes_.at(id); }
  const Movement& movement(int id) const { return movements_.at(id); }

  /// Internal intersections occupy ids 0..num_internal()-1.
  int num_internal() const { return num_internal_; }
  /// Incoming lanes occupy ids 0..num_incoming_lanes()-1.
  int num_incoming_lanes() const { return num_incoming_; }
  int num_lanes() const { return static_cast<int>(lanes_.size()); }

  const std::array<Phase, kNumPhases>& phases(int internal_id) const { return phase_table_.at(internal_id); }
  const std::vector<int>& incoming_lanes(int v) const { return in_lanes_.at(v); }
  const std::vector<int>& outgoing_lanes(int v) const { return out_lanes_.at(v); }
  /// NB_v: internal neighbours reachable over an internal approach.
  const std::vector<int>& neighbors(int v) const { return neighbors_.at(v); }
  int max_incoming_lanes() const;

  /// Movement (from, to) id, or -1.
  int find_movement(int from_lane, int to_lane) const;
  std::vector<int> entry_lanes() const;
  std::vector<int> all_incoming_lanes() const;

  /// Throws ValidationError on a broken invariant.
  void check_invariants() const;

  friend Network build_network(const LayoutSpec& layout);

 private:
  std::vector<Intersection> intersections_;
  std::vector<Approach> approaches_;
  std::vector<Lane> lanes_;
  std::vector<Movement> movements_;
  std::vector<std::array<Phase, kNumPhases>> phase_table_;
  std::vector<std::vector<int>> in_lanes_;
  std::vector<std::vector<int>> out_lanes_;
  std::vector<std::vector<int>> neighbors_;
  std::map<std::pair<int, int>, int> movement_index_;
  int num_internal_ = 0;
  int num_incoming_ = 0;
};

void validate(const NetworkSpec& spec);
LayoutSpec grid_layout(const NetworkSpec& spec);
Network build_network(const NetworkSpec& spec);
Network build_network(const LayoutSpec& layout);

/// Binary (or row-stochastic, for routing) dense matrix over lane or
/// intersection index sets.
struct MaskMatrix {
  Matrix values;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
  double operator()(int i, int j) const { return values(i, j); }
  /// Number of non-zero entries; for attention masks this is the edge count
  /// that drives the attention cost.
  std::size_t nnz() const;
  bool is_binary() const;
  bool is_symmetric() const;
};

/// m(k, l) = 1 iff (f1[k], f2[l]) is a movement.
MaskMatrix movement_matrix(const Network& net, std::span<const int> f1, std::span<const int> f2);

/// Routing configuration. Per-intersection shares may be jittered from the
/// base shares with a seed; explicit approach rows override everything.
struct RoutingConfig {
  TurnShares shares;
  std::optional<std::uint64_t> random_seed;
  double jitter = 0.05;
  std::map<int, Matrix> explicit_rows;  // approach id -> n x n row-stochastic block
};

struct Routing {
  MaskMatrix rp;                        // |lanes| x |lanes|
  std::vector<TurnShares> shares;       // per internal intersection
};

Routing make_routing(const Network& net, const RoutingConfig& config);
MaskMatrix routing_proportion_matrix(const Network& net, const RoutingConfig& config);

/// Lane weights on an approach whose downstream intersection has `shares`.
std::vector<double> lane_shares(const Network& net, int approach_id, const TurnShares& shares);

MaskMatrix naive_movement_mask(const Network& net);
MaskMatrix augmented_movement_mask(const Network& net);
/// Lane adjacency (same approach) over incoming lanes, zero diagonal.
MaskMatrix lane_adjacency(const Network& net);
MaskMatrix intersection_adjacency(const Network& net);

}  // namespace tsc
