#pragma once

#include <span>
#include <vector>

#include "tsc/network.hpp"
#include "tsc/simulator.hpp"

namespace tsc {

/// bm(i, j) = 1 iff (f1[i], f2[j]) is a movement and lane f2[j] still has
/// room (wave < wave_max). Rows index the upstream set. `wave` covers all lanes.
MaskMatrix blockage_matrix(const Network& net, std::span<const double> wave, std::span<const int> f1,
                           std::span<const int> f2);
MaskMatrix blockage_matrix(const Simulator& sim, std::span<const int> f1, std::span<const int> f2);

/// Whole-network inputs of the store-and-forward update. Lane vectors are
/// indexed by incoming lane id; matrices with an `all` side span every lane.
struct SnfInputs {
  Vector x;   // |L_in| queues
  Vector a;   // |L_in| green indicators
  Vector c;   // |L_in| discharge rates
  Matrix rp;  // |L| x |L| routing proportions
  Matrix m;   // |L_in| x |L| movement matrix
  Matrix bm;  // |L_in| x |L| blockage matrix
  Vector d;   // |L_in| external demand, zero off entry lanes
};

struct SnfTerms {
  Vector intra;
  Vector inter;
  Vector external;
};

/// Intra, inter and external contributions for the lanes `f_in` of a region,
/// given the incoming lanes `f_in_outside` of neighbouring intersections
/// outside the region. Pure matrix evaluation.
SnfTerms snf_region_terms(const SnfInputs& in, std::span<const int> f_in, std::span<const int> f_in_outside);

/// X' over all incoming lanes (the whole network as one region).
Vector snf_update_oracle(const SnfInputs& in);
/// X'(f_in) for one region.
Vector snf_update_oracle(const SnfInputs& in, std::span<const int> f_in, std::span<const int> f_in_outside);

/// Incoming lanes of intersections neighbouring `members` but outside it.
std::vector<int> outside_neighbor_lanes(const Network& net, std::span<const int> members);
std::vector<int> region_lanes(const Network& net, std::span<const int> members);

/// Assembles SnfInputs for a real-valued state; a(l) comes from `phases`.
SnfInputs snf_inputs(const Network& net, const Routing& routing, std::span<const double> x,
                     std::span<const PhaseId> phases, std::span<const double> demand);

/// Real-valued store-and-forward dynamics evolved lane by lane. Every lane
/// holds its whole wave in the queue; exit lanes are sinks. Requires one
/// movement per incoming lane.
class FractionalFlowSim {
 public:
  FractionalFlowSim(const Network& net, Routing routing);

  const std::vector<double>& queues() const { return x_; }
  void set_queues(std::vector<double> x);

  /// One step with per-lane green flags and per-lane external demand.
  void step(std::span<const double> green, std::span<const double> demand);
  void step(std::span<const PhaseId> phases, std::span<const double> demand);

  std::vector<double> green_flags(std::span<const PhaseId> phases) const;

 private:
  const Network* net_;
  Routing routing_;
  std::vector<double> x_;
};

}  // namespace tsc
