#include "tsc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace tsc {

namespace {

constexpr double kPosEps = 1e-9;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

std::int64_t SimState::on_network() const {
  std::int64_t n = 0;
  for (const auto& q : lanes) n += static_cast<std::int64_t>(q.size());
  return n;
}

void validate(const Network& net, const DemandSpec& demand) {
  std::vector<std::string> issues;
  std::vector<bool> seen(net.num_lanes(), false);
  for (const auto& e : demand.entries) {
    const std::string where = "demand lane " + std::to_string(e.lane);
    if (e.lane < 0 || e.lane >= net.num_lanes() || !net.lane(e.lane).is_entry) {
      issues.push_back(where + " is not an entry lane");
      continue;
    }
    if (seen[e.lane]) issues.push_back(where + " listed twice");
    seen[e.lane] = true;
    if (!(e.process.rate_vph >= 0)) issues.push_back(where + ": rate must be >= 0");
    int last = -1;
    for (const auto& [t, n] : e.process.trace) {
      if (t < last) issues.push_back(where + ": trace times must be non-decreasing");
      if (t < 0 || n < 0) issues.push_back(where + ": trace entries must be non-negative");
      last = t;
    }
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
}

DemandSpec parse_demand_trace(std::istream& in) {
  std::map<int, std::vector<std::pair<int, int>>> by_lane;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
      throw ValidationError({"trace line " + std::to_string(line_no) + ": expected time_s,entry_lane_id,count"});
    try {
      by_lane[std::stoi(b)].emplace_back(std::stoi(a), std::stoi(c));
    } catch (const std::exception&) {
      throw ValidationError({"trace line " + std::to_string(line_no) + ": non-integer field"});
    }
  }
  DemandSpec spec;
  for (auto& [lane, rows] : by_lane) {
    std::stable_sort(rows.begin(), rows.end(), [](auto& x, auto& y) { return x.first < y.first; });
    EntryDemand e;
    e.lane = lane;
    e.process.kind = ArrivalProcess::Kind::Trace;
    e.process.trace = std::move(rows);
    spec.entries.push_back(std::move(e));
  }
  return spec;
}

void write_demand_trace(std::ostream& out, const DemandSpec& demand) {
  std::vector<std::tuple<int, int, int>> rows;
  for (const auto& e : demand.entries) {
    if (e.process.kind != ArrivalProcess::Kind::Trace)
      throw std::invalid_argument("write_demand_trace: only trace demand can be written");
    for (const auto& [t, n] : e.process.trace) rows.emplace_back(t, e.lane, n);
  }
  std::stable_sort(rows.begin(), rows.end());
  for (const auto& [t, l, n] : rows) out << t << ',' << l << ',' << n << '\n';
}

Simulator::Simulator(const Network& net, DemandSpec demand, SimConfig config, std::uint64_t seed)
    : net_(&net), demand_(std::move(demand)), config_(config), rng_(seed), jitter_rng_(seed ^ 0x5851F42D4C957F2DULL) {
  validate(net, demand_);
  if (!(config_.free_flow_speed > 0) || !(config_.jam_spacing > 0) || config_.all_red_s < 0 ||
      config_.discharge_jitter < 0 || config_.discharge_jitter >= 1)
    throw ValidationError({"invalid simulator config"});
  routing_ = make_routing(net, demand_.routing);
  const int n_all = net.num_lanes();
  rp_cdf_.resize(n_all);
  for (int l = 0; l < n_all; ++l) {
    double acc = 0.0;
    for (int j = 0; j < n_all; ++j) {
      const double p = routing_.rp(l, j);
      if (p > 0) {
        acc += p;
        rp_cdf_[l].emplace_back(j, acc);
      }
    }
  }
  state_.lanes.resize(n_all);
  state_.wave.assign(n_all, 0);
  state_.lane_queues.assign(net.num_incoming_lanes(), 0);
  state_.signals.resize(net.num_internal());
  state_.pending.resize(demand_.entries.size());
  credit_.assign(net.movements().size(), 0.0);
  det_credit_.assign(demand_.entries.size(), 0.0);
  trace_cursor_.assign(demand_.entries.size(), 0);
  entry_index_.assign(n_all, -1);
  for (std::size_t i = 0; i < demand_.entries.size(); ++i) entry_index_[demand_.entries[i].lane] = static_cast<int>(i);
  // Route draws come from a per-vehicle stream so that vehicle i makes the
  // same choices under any controller.
  route_salt_ = splitmix64(seed ^ 0xA5A5A5A5DEADBEEFULL);
}

double Simulator::route_uniform(VehicleRecord& v) {
  const std::uint64_t key = route_salt_ ^ (static_cast<std::uint64_t>(v.id) * 0x100000001B3ULL) ^
                            (static_cast<std::uint64_t>(v.draws++) << 48);
  return to_unit(splitmix64(key));
}

int Simulator::sample_lane(VehicleRecord& v, int from_lane) {
  const auto& cdf = rp_cdf_[from_lane];
  if (cdf.size() == 1) return cdf.front().first;
  const double u = route_uniform(v) * cdf.back().second;
  for (const auto& [lane, c] : cdf)
    if (u < c) return lane;
  return cdf.back().first;
}

void Simulator::join_lane(VehicleRecord& v, int lane) {
  const Lane& ln = net_->lane(lane);
  v.current_lane = lane;
  v.position = 0.0;
  v.speed = config_.free_flow_speed;
  v.joined_at = state_.step_clock;
  v.route.push_back(lane);
  v.movement = -1;
  v.next_lane = -1;
  if (!ln.is_incoming) return;
  const auto& mvs = ln.movements;
  if (mvs.size() == 1) {
    v.movement = mvs.front();
  } else {
    const int inter = net_->approach(ln.approach_id).to;
    const TurnShares& s = routing_.shares[inter];
    double total = 0.0;
    for (int m : mvs) total += s.of(net_->movement(m).turn);
    double u = route_uniform(v) * total;
    v.movement = mvs.back();
    for (int m : mvs) {
      u -= s.of(net_->movement(m).turn);
      if (u < 0) {
        v.movement = m;
        break;
      }
    }
  }
  v.next_lane = sample_lane(v, net_->movement(v.movement).to_lane);
}

void Simulator::apply_action(std::span<const PhaseId> phases) {
  if (static_cast<int>(phases.size()) != net_->num_internal())
    throw std::invalid_argument("apply_action: one phase per internal intersection required");
  for (PhaseId p : phases)
    if (static_cast<int>(p) >= kNumPhases) throw std::invalid_argument("apply_action: phase not in phase table");
  for (int v = 0; v < net_->num_internal(); ++v) {
    SignalState& s = state_.signals[v];
    const PhaseId target = phases[v];
    if (s.all_red_remaining > 0) {
      s.pending = target;
    } else if (target != s.current) {
      s.pending = target;
      s.all_red_remaining = config_.all_red_s;
      if (config_.all_red_s == 0) {
        s.current = target;
        s.green_elapsed = 0;
      }
    }
  }
}

void Simulator::set_signal(int intersection, PhaseId phase) {
  if (static_cast<int>(phase) > kNumPhases) throw std::invalid_argument("set_signal: phase not in phase table");
  SignalState& s = state_.signals.at(intersection);
  if (phase == PhaseId::AllRed) {
    s.pending = s.current;
    s.all_red_remaining = 1;
    return;
  }
  if (phase != s.current) s.green_elapsed = 0;
  s.current = phase;
  s.pending = phase;
  s.all_red_remaining = 0;
}

bool Simulator::green(int movement) const {
  const Movement& mv = net_->movement(movement);
  const PhaseId p = state_.signals[mv.intersection].effective();
  if (p == PhaseId::AllRed) return false;
  const auto& allowed = net_->phases(mv.intersection)[static_cast<int>(p)].permitted_movements;
  return std::binary_search(allowed.begin(), allowed.end(), movement);
}

std::int64_t Simulator::place_vehicle(int lane, double position, double speed, int next_lane) {
  const Lane& ln = net_->lane(lane);
  if (position < 0 || position > ln.length) throw std::invalid_argument("place_vehicle: position outside lane");
  auto& q = state_.lanes[lane];
  if (static_cast<int>(q.size()) >= ln.capacity) throw std::invalid_argument("place_vehicle: lane at capacity");
  VehicleRecord v;
  v.id = state_.next_vehicle_id++;
  v.entry_time = state_.step_clock;
  join_lane(v, lane);
  v.position = position;
  v.speed = speed;
  v.joined_at = state_.step_clock - 1;
  if (next_lane >= 0) {
    if (v.movement < 0) throw std::invalid_argument("place_vehicle: exit lanes have no next lane");
    const int to = net_->movement(v.movement).to_lane;
    if (routing_.rp(to, next_lane) <= 0 && next_lane != to)
      throw std::invalid_argument("place_vehicle: next lane unreachable");
    v.next_lane = next_lane;
  }
  const auto pos = std::find_if(q.begin(), q.end(), [&](const VehicleRecord& o) { return o.position < position; });
  q.insert(pos, std::move(v));
  ++state_.total_entered;
  refresh_aggregates();
  return state_.next_vehicle_id - 1;
}

int Simulator::queue_length(int lane) const {
  const auto& q = state_.lanes[lane];
  const double len = net_->lane(lane).length;
  int k = 0;
  for (const auto& v : q) {
    if (v.position < len - k * config_.jam_spacing - kPosEps) break;
    ++k;
  }
  return k;
}

int Simulator::waiting(int lane) const {
  int n = 0;
  for (const auto& v : state_.lanes[lane]) n += v.speed < config_.waiting_speed;
  return n;
}

void Simulator::move_vehicles() {
  for (int l = 0; l < net_->num_lanes(); ++l) {
    const double len = net_->lane(l).length;
    double limit = len;
    for (auto& v : state_.lanes[l]) {
      double next = std::min(v.position + config_.free_flow_speed, limit);
      next = std::max(next, v.position);
      v.speed = next - v.position;
      v.position = next;
      limit = next - config_.jam_spacing;
    }
  }
}

void Simulator::exit_vehicles(SimEvents& ev) {
  const std::int64_t now = state_.step_clock + 1;
  for (int l = net_->num_incoming_lanes(); l < net_->num_lanes(); ++l) {
    auto& q = state_.lanes[l];
    const double len = net_->lane(l).length;
    while (!q.empty() && q.front().position >= len - kPosEps) {
      state_.exited_travel_time_sum += now - q.front().entry_time;
      q.pop_front();
      ++ev.exited;
      ++state_.total_exited;
    }
  }
}

void Simulator::discharge(SimEvents& ev) {
  const std::int64_t clock = state_.step_clock;
  for (std::size_t m = 0; m < credit_.size(); ++m) {
    if (!green(static_cast<int>(m))) {
      credit_[m] = 0.0;
      continue;
    }
    double c = net_->movement(static_cast<int>(m)).discharge_rate;
    if (config_.discharge_jitter > 0) {
      std::uniform_real_distribution<double> u(1.0 - config_.discharge_jitter, 1.0 + config_.discharge_jitter);
      c *= u(jitter_rng_);
    }
    credit_[m] = std::min(credit_[m] + c, std::max(1.0, c));
  }
  for (int l = 0; l < net_->num_incoming_lanes(); ++l) {
    auto& q = state_.lanes[l];
    const double len = net_->lane(l).length;
    int crossed = 0;
    while (!q.empty()) {
      VehicleRecord& v = q.front();
      if (v.joined_at >= clock || v.position < len - crossed * config_.jam_spacing - kPosEps) break;
      const int mv = v.movement;
      if (!green(mv) || credit_[mv] < 1.0) break;
      const int target = v.next_lane;
      if (static_cast<int>(state_.lanes[target].size()) >= net_->lane(target).capacity) {
        ev.blocked_movements.push_back(mv);
        break;
      }
      credit_[mv] -= 1.0;
      VehicleRecord moved = std::move(v);
      q.pop_front();
      join_lane(moved, target);
      state_.lanes[target].push_back(std::move(moved));
      ++ev.discharged[l];
      ++crossed;
    }
  }
}

void Simulator::generate_arrivals() {
  const std::int64_t clock = state_.step_clock;
  for (std::size_t i = 0; i < demand_.entries.size(); ++i) {
    const auto& e = demand_.entries[i];
    int count = 0;
    switch (e.process.kind) {
      case ArrivalProcess::Kind::Poisson: {
        if (e.process.rate_vph > 0) {
          std::poisson_distribution<int> pois(e.process.rate_vph / 3600.0);
          count = pois(rng_);
        }
        break;
      }
      case ArrivalProcess::Kind::Deterministic: {
        det_credit_[i] += e.process.rate_vph / 3600.0;
        count = static_cast<int>(std::floor(det_credit_[i] + 1e-12));
        det_credit_[i] -= count;
        break;
      }
      case ArrivalProcess::Kind::Trace: {
        auto& cur = trace_cursor_[i];
        while (cur < e.process.trace.size() && e.process.trace[cur].first <= clock) count += e.process.trace[cur++].second;
        break;
      }
    }
    for (int k = 0; k < count; ++k) {
      VehicleRecord v;
      v.id = state_.next_vehicle_id++;
      v.entry_time = clock;
      v.next_lane = sample_lane(v, e.lane);
      state_.pending[i].push_back(std::move(v));
    }
  }
}

void Simulator::admit_pending(SimEvents& ev) {
  for (auto& queue : state_.pending) {
    if (queue.empty()) continue;
    VehicleRecord& v = queue.front();
    const int lane = v.next_lane;
    if (static_cast<int>(state_.lanes[lane].size()) >= net_->lane(lane).capacity) continue;
    VehicleRecord moved = std::move(v);
    queue.pop_front();
    join_lane(moved, lane);
    state_.lanes[lane].push_back(std::move(moved));
    ++ev.entered;
    ++state_.total_entered;
  }
}

void Simulator::refresh_aggregates() {
  for (int l = 0; l < net_->num_lanes(); ++l) state_.wave[l] = static_cast<int>(state_.lanes[l].size());
  for (int l = 0; l < net_->num_incoming_lanes(); ++l) state_.lane_queues[l] = queue_length(l);
}

SimEvents Simulator::step() {
  SimEvents ev;
  ev.discharged.assign(net_->num_incoming_lanes(), 0);
  move_vehicles();
  exit_vehicles(ev);
  discharge(ev);
  generate_arrivals();
  admit_pending(ev);
  for (auto& s : state_.signals) {
    if (s.all_red_remaining > 0) {
      if (--s.all_red_remaining == 0) {
        if (s.pending != s.current) s.green_elapsed = 0;
        s.current = s.pending;
      }
    } else {
      ++s.green_elapsed;
    }
  }
  ++state_.step_clock;
  refresh_aggregates();
  return ev;
}

SimEvents Simulator::step(std::span<const PhaseId> assignment) {
  if (static_cast<int>(assignment.size()) != net_->num_internal())
    throw std::invalid_argument("step: one phase per internal intersection required");
  for (PhaseId p : assignment)
    if (static_cast<int>(p) > kNumPhases) throw std::invalid_argument("step: phase not in phase table");
  for (int v = 0; v < net_->num_internal(); ++v) set_signal(v, assignment[v]);
  return step();
}

std::vector<int> lane_cell_counts(const Simulator& sim, int lane, int cells) {
  if (cells < 1) throw std::invalid_argument("lane_cell_counts: B must be >= 1");
  const double len = sim.network().lane(lane).length;
  const double width = len / cells;
  std::vector<int> out(cells, 0);
  for (const auto& v : sim.state().lanes[lane]) {
    const double to_stop = len - v.position;
    const int idx = std::min(cells - 1, static_cast<int>(std::floor(to_stop / width)));
    ++out[std::max(0, idx)];
  }
  return out;
}

Matrix lane_cell_matrix(const Simulator& sim, int cells) {
  const int n = sim.network().num_incoming_lanes();
  Matrix out(n, cells);
  for (int l = 0; l < n; ++l) {
    const auto c = lane_cell_counts(sim, l, cells);
    for (int b = 0; b < cells; ++b) out(l, b) = c[b];
  }
  return out;
}

Matrix macro_state(const Simulator& sim) {
  const Network& net = sim.network();
  const int width = net.max_incoming_lanes();
  Matrix out = Matrix::Zero(net.num_internal(), 2 * width);
  for (int v = 0; v < net.num_internal(); ++v) {
    const auto& in = net.incoming_lanes(v);
    for (std::size_t k = 0; k < in.size(); ++k) {
      out(v, static_cast<Eigen::Index>(k)) = sim.waiting(in[k]);
      out(v, width + static_cast<Eigen::Index>(k)) = sim.state().wave[in[k]];
    }
  }
  return out;
}

double region_reward(const Simulator& sim, std::span<const int> members) {
  double total = 0.0;
  for (int v : members)
    for (int l : sim.network().incoming_lanes(v)) total += sim.waiting(l);
  return -total;
}

double mean_travel_time(std::span<const double> travel_times) {
  if (travel_times.empty()) return 0.0;
  double s = 0.0;
  for (double t : travel_times) s += t;
  return s / static_cast<double>(travel_times.size());
}

Metrics metrics(const Simulator& sim, std::span<const double> region_reward_sums) {
  const SimState& st = sim.state();
  Metrics m;
  m.throughput = st.total_exited;
  m.per_region_reward_sum.assign(region_reward_sums.begin(), region_reward_sums.end());
  double total = static_cast<double>(st.exited_travel_time_sum);
  std::int64_t count = st.total_exited;
  for (const auto& q : st.lanes) {
    for (const auto& v : q) total += static_cast<double>(st.step_clock - v.entry_time);
    count += static_cast<std::int64_t>(q.size());
  }
  for (const auto& q : st.pending) {
    for (const auto& v : q) total += static_cast<double>(st.step_clock - v.entry_time);
    count += static_cast<std::int64_t>(q.size());
  }
  m.average_travel_time = count > 0 ? total / static_cast<double>(count) : 0.0;
  return m;
}

}  // namespace tsc
