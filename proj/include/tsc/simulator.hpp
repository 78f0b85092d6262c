#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tsc/network.hpp"

namespace tsc {

struct ArrivalProcess {
  enum class Kind { Deterministic, Poisson, Trace };
  Kind kind = Kind::Poisson;
  double rate_vph = 0.0;
  std::vector<std::pair<int, int>> trace;  // (time_s, count), sorted by time
};

struct EntryDemand {
  int lane = -1;  // entry lane id
  ArrivalProcess process;
};

struct DemandSpec {
  std::vector<EntryDemand> entries;
  RoutingConfig routing;
};

void validate(const Network& net, const DemandSpec& demand);

/// Parses lines of `time_s,entry_lane_id,count`; blank lines and lines
/// starting with '#' are skipped.
DemandSpec parse_demand_trace(std::istream& in);
void write_demand_trace(std::ostream& out, const DemandSpec& demand);

struct SimConfig {
  double free_flow_speed = 10.0;   // m/s
  double waiting_speed = 0.1;      // below this a vehicle counts as waiting
  double jam_spacing = 7.5;        // m
  int all_red_s = 3;
  double discharge_jitter = 0.0;   // c^t = c * U(1 - j, 1 + j) when > 0
};

struct VehicleRecord {
  std::int64_t id = 0;
  std::vector<int> route;  // lanes visited so far
  double position = 0.0;   // metres from lane start
  int current_lane = -1;
  std::int64_t entry_time = 0;
  std::optional<std::int64_t> exit_time;
  double speed = 0.0;
  int movement = -1;    // movement used to leave current_lane, -1 on exit lanes
  int next_lane = -1;   // lane occupied after crossing (lane change applied at entry)
  std::int64_t joined_at = 0;
  std::uint32_t draws = 0;  // route draws consumed
};

struct SignalState {
  PhaseId current = PhaseId::NS;
  PhaseId pending = PhaseId::NS;
  int all_red_remaining = 0;
  int green_elapsed = 0;  // seconds the current phase has been displayed
  PhaseId effective() const { return all_red_remaining > 0 ? PhaseId::AllRed : current; }
};

struct SimState {
  std::int64_t step_clock = 0;
  std::vector<std::deque<VehicleRecord>> lanes;    // head (stop line) first
  std::vector<std::deque<VehicleRecord>> pending;  // per entry lane, not yet on the network
  std::vector<int> lane_queues;                    // X(l), incoming lanes
  std::vector<int> wave;                           // all lanes
  std::vector<SignalState> signals;                // per internal intersection
  std::int64_t total_entered = 0;
  std::int64_t total_exited = 0;
  std::int64_t exited_travel_time_sum = 0;
  std::int64_t next_vehicle_id = 0;

  std::int64_t on_network() const;
};

struct SimEvents {
  int entered = 0;
  int exited = 0;
  std::vector<int> discharged;          // per incoming lane
  std::vector<int> blocked_movements;   // movement ids blocked by a full target lane

  bool operator==(const SimEvents&) const = default;
};

class Simulator {
 public:
  Simulator(const Network& net, DemandSpec demand, SimConfig config, std::uint64_t seed);

  const Network& network() const { return *net_; }
  const SimConfig& config() const { return config_; }
  const Routing& routing() const { return routing_; }
  const SimState& state() const { return state_; }

  /// Installs an all-red clearance wherever the requested phase differs from
  /// the displayed one.
  void apply_action(std::span<const PhaseId> phases);

  /// Advances one second under the installed signal state.
  SimEvents step();
  /// Advances one second with a raw per-intersection assignment (AllRed allowed).
  SimEvents step(std::span<const PhaseId> assignment);

  /// Places a vehicle directly (tests and scenario set-up). Returns its id.
  /// `next_lane` pins the post-crossing lane; -1 samples it from routing.
  std::int64_t place_vehicle(int lane, double position, double speed = 0.0, int next_lane = -1);
  void set_signal(int intersection, PhaseId phase);

  bool green(int movement) const;
  int queue_length(int lane) const;
  int waiting(int lane) const;

 private:
  void join_lane(VehicleRecord& v, int lane);
  double route_uniform(VehicleRecord& v);
  int sample_lane(VehicleRecord& v, int from_lane);
  void move_vehicles();
  void exit_vehicles(SimEvents& ev);
  void discharge(SimEvents& ev);
  void generate_arrivals();
  void admit_pending(SimEvents& ev);
  void refresh_aggregates();

  const Network* net_;
  DemandSpec demand_;
  SimConfig config_;
  Routing routing_;
  std::mt19937_64 rng_;         // arrivals
  std::mt19937_64 jitter_rng_;  // discharge jitter
  std::uint64_t route_salt_ = 0;
  SimState state_;
  std::vector<std::vector<std::pair<int, double>>> rp_cdf_;  // per lane
  std::vector<double> credit_;                               // per movement
  std::vector<double> det_credit_;                           // per demand entry
  std::vector<std::size_t> trace_cursor_;                    // per demand entry
  std::vector<int> entry_index_;                             // lane -> pending slot
};

/// Vehicle counts in B equal cells, cell 0 nearest the stop line.
std::vector<int> lane_cell_counts(const Simulator& sim, int lane, int cells);
/// |L_in| x B micro state.
Matrix lane_cell_matrix(const Simulator& sim, int cells);
/// |V_internal| x 2*max|In_v| macro state: waits then waves, zero padded.
Matrix macro_state(const Simulator& sim);
/// -(sum of waiting vehicles over incoming lanes of the members).
double region_reward(const Simulator& sim, std::span<const int> members);

struct Metrics {
  double average_travel_time = 0.0;
  std::int64_t throughput = 0;
  std::vector<double> per_region_reward_sum;
};

/// Exited vehicles contribute their travel time; vehicles still en route or
/// waiting to enter contribute their current age.
Metrics metrics(const Simulator& sim, std::span<const double> region_reward_sums = {});
double mean_travel_time(std::span<const double> travel_times);

}  // namespace tsc
