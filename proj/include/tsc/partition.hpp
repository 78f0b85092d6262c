#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsc/network.hpp"

namespace tsc {

/// A disjoint group of internal intersections: one centre plus a subset of
/// its neighbours. `members` lists the centre first.
struct Region {
  int id = 0;
  int center = -1;
  std::vector<int> members;
};

enum class PartitionStrategy { Greedy, MinRegions, Random, Explicit };

struct PartitionConfig {
  int max_region_size = 4;
  PartitionStrategy strategy = PartitionStrategy::Greedy;
  std::uint64_t seed = 0;                         // Random
  std::vector<std::vector<int>> layout;           // Explicit
  std::uint64_t search_budget = 5'000'000;        // MinRegions node budget
};

PartitionStrategy partition_strategy_from_string(const std::string& name);

std::vector<Region> partition(const Network& net, const PartitionConfig& config);

struct PartitionViolation {
  enum class Kind { Empty, UnknownIntersection, Duplicate, Uncovered, NonStar };
  Kind kind;
  int region = -1;
  int intersection = -1;
  std::string message;
};

/// Disjointness, coverage and star shape. Diagnostics are returned, never thrown.
std::vector<PartitionViolation> validate_partition(const Network& net, const std::vector<Region>& regions);

/// Builds regions from raw member lists, picking a valid centre when one exists.
std::vector<Region> regions_from_layout(const Network& net, const std::vector<std::vector<int>>& layout);

/// `region_id: [intersection ids]`, one region per line.
std::vector<std::vector<int>> parse_region_layout(std::istream& in);
void write_region_layout(std::ostream& out, const std::vector<Region>& regions);

struct PaddedRegion {
  Region region;
  std::vector<int> slots;                  // intersection id, or -1 for a dummy slot
  std::vector<std::vector<int>> lane_slots;  // per slot: incoming lane id or -1

  bool valid(int slot) const { return slots.at(slot) >= 0; }
  int num_real() const { return static_cast<int>(region.members.size()); }
};

std::vector<PaddedRegion> pad_regions(const Network& net, const std::vector<Region>& regions, int max_region_size,
                                      int max_lanes_per_intersection);

}  // namespace tsc
