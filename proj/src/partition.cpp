#include "tsc/partition.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

namespace tsc {

PartitionStrategy partition_strategy_from_string(const std::string& name) {
  if (name == "greedy") return PartitionStrategy::Greedy;
  if (name == "min_regions") return PartitionStrategy::MinRegions;
  if (name == "random") return PartitionStrategy::Random;
  if (name == "explicit") return PartitionStrategy::Explicit;
  throw ValidationError({"unknown partition strategy '" + name + "'"});
}

namespace {

bool is_star(const Network& net, int center, const std::vector<int>& members) {
  const auto& nb = net.neighbors(center);
  for (int m : members)
    if (m != center && std::find(nb.begin(), nb.end(), m) == nb.end()) return false;
  return true;
}

Region make_region(int id, int center, std::vector<int> others) {
  std::sort(others.begin(), others.end());
  Region r;
  r.id = id;
  r.center = center;
  r.members.push_back(center);
  for (int o : others)
    if (o != center) r.members.push_back(o);
  return r;
}

std::vector<Region> greedy(const Network& net, int max_size) {
  std::vector<char> taken(net.num_internal(), 0);
  std::vector<Region> out;
  for (int v = 0; v < net.num_internal(); ++v) {
    if (taken[v]) continue;
    taken[v] = 1;
    std::vector<int> others;
    for (int u : net.neighbors(v)) {
      if (static_cast<int>(others.size()) + 1 >= max_size) break;
      if (!taken[u]) {
        taken[u] = 1;
        others.push_back(u);
      }
    }
    out.push_back(make_region(static_cast<int>(out.size()), v, others));
  }
  return out;
}

std::vector<Region> random_partition(const Network& net, int max_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> order(net.num_internal());
  for (int i = 0; i < net.num_internal(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> taken(net.num_internal(), 0);
  std::vector<Region> out;
  for (int v : order) {
    if (taken[v]) continue;
    taken[v] = 1;
    std::vector<int> free;
    for (int u : net.neighbors(v))
      if (!taken[u]) free.push_back(u);
    std::shuffle(free.begin(), free.end(), rng);
    const int cap = std::min<int>(max_size - 1, static_cast<int>(free.size()));
    const int k = std::uniform_int_distribution<int>(0, cap)(rng);
    free.resize(k);
    for (int u : free) taken[u] = 1;
    out.push_back(make_region(static_cast<int>(out.size()), v, free));
  }
  return out;
}

// Branch and bound over star-shaped regions covering the lowest free node.
class MinRegionSearch {
 public:
  MinRegionSearch(const Network& net, int max_size, std::uint64_t budget)
      : net_(net), max_(max_size), budget_(budget), taken_(net.num_internal(), 0), remaining_(net.num_internal()) {}

  std::vector<Region> run(std::vector<Region> incumbent) {
    best_ = std::move(incumbent);
    search();
    return best_;
  }

 private:
  struct Candidate {
    int center;
    std::vector<int> members;
  };

  void subsets(const std::vector<int>& pool, int limit, std::vector<std::vector<int>>& out) const {
    const int n = static_cast<int>(pool.size());
    for (int mask = 0; mask < (1 << n); ++mask) {
      if (__builtin_popcount(static_cast<unsigned>(mask)) > limit) continue;
      std::vector<int> s;
      for (int i = 0; i < n; ++i)
        if (mask & (1 << i)) s.push_back(pool[i]);
      out.push_back(std::move(s));
    }
  }

  std::vector<int> free_neighbors(int v, int exclude) const {
    std::vector<int> f;
    for (int u : net_.neighbors(v))
      if (!taken_[u] && u != exclude) f.push_back(u);
    return f;
  }

  std::vector<Candidate> candidates(int v) const {
    std::vector<Candidate> out;
    std::set<std::vector<int>> seen;
    auto add = [&](int center, std::vector<int> members) {
      std::vector<int> key = members;
      std::sort(key.begin(), key.end());
      if (seen.insert(key).second) out.push_back({center, std::move(members)});
    };
    std::vector<std::vector<int>> subs;
    subsets(free_neighbors(v, -1), max_ - 1, subs);
    for (auto& s : subs) {
      s.insert(s.begin(), v);
      add(v, s);
    }
    for (int c : free_neighbors(v, -1)) {
      subs.clear();
      subsets(free_neighbors(c, v), max_ - 2, subs);
      for (auto& s : subs) {
        s.insert(s.begin(), v);
        s.insert(s.begin(), c);
        add(c, s);
      }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Candidate& a, const Candidate& b) { return a.members.size() > b.members.size(); });
    return out;
  }

  void search() {
    if (nodes_++ > budget_) return;
    const std::size_t lower = current_.size() + static_cast<std::size_t>((remaining_ + max_ - 1) / max_);
    if (lower >= best_.size()) return;
    int v = 0;
    while (v < net_.num_internal() && taken_[v]) ++v;
    if (v == net_.num_internal()) return;
    for (const auto& cand : candidates(v)) {
      for (int m : cand.members) taken_[m] = 1;
      remaining_ -= static_cast<int>(cand.members.size());
      std::vector<int> others(cand.members.begin(), cand.members.end());
      current_.push_back(make_region(static_cast<int>(current_.size()), cand.center, others));
      if (remaining_ == 0) {
        if (current_.size() < best_.size()) best_ = current_;
      } else {
        search();
      }
      current_.pop_back();
      remaining_ += static_cast<int>(cand.members.size());
      for (int m : cand.members) taken_[m] = 0;
      if (nodes_ > budget_) return;
    }
  }

  const Network& net_;
  int max_;
  std::uint64_t budget_;
  std::uint64_t nodes_ = 0;
  std::vector<char> taken_;
  int remaining_;
  std::vector<Region> current_;
  std::vector<Region> best_;
};

}  // namespace

std::vector<Region> regions_from_layout(const Network& net, const std::vector<std::vector<int>>& layout) {
  std::vector<Region> out;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& members = layout[i];
    Region r;
    r.id = static_cast<int>(i);
    r.members = members;
    r.center = members.empty() ? -1 : members.front();
    for (int c : members) {
      if (c >= 0 && c < net.num_internal() && is_star(net, c, members)) {
        r.center = c;
        break;
      }
    }
    if (r.center >= 0) {
      // centre first, the rest in their given order
      std::stable_partition(r.members.begin(), r.members.end(), [&](int m) { return m == r.center; });
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Region> partition(const Network& net, const PartitionConfig& config) {
  if (config.max_region_size < 1) throw ValidationError({"max_region_size must be >= 1"});
  switch (config.strategy) {
    case PartitionStrategy::Greedy: return greedy(net, config.max_region_size);
    case PartitionStrategy::Random: return random_partition(net, config.max_region_size, config.seed);
    case PartitionStrategy::MinRegions: {
      MinRegionSearch search(net, config.max_region_size, config.search_budget);
      auto best = search.run(greedy(net, config.max_region_size));
      for (std::size_t i = 0; i < best.size(); ++i) best[i].id = static_cast<int>(i);
      return best;
    }
    case PartitionStrategy::Explicit: {
      auto regions = regions_from_layout(net, config.layout);
      const auto violations = validate_partition(net, regions);
      std::vector<std::string> issues;
      for (const auto& v : violations) issues.push_back(v.message);
      for (const auto& r : regions)
        if (static_cast<int>(r.members.size()) > config.max_region_size)
          issues.push_back("region " + std::to_string(r.id) + " exceeds max_region_size");
      if (!issues.empty()) throw ValidationError(std::move(issues));
      return regions;
    }
  }
  return {};
}

std::vector<PartitionViolation> validate_partition(const Network& net, const std::vector<Region>& regions) {
  using Kind = PartitionViolation::Kind;
  std::vector<PartitionViolation> out;
  std::vector<int> owner(net.num_internal(), -1);
  for (const auto& r : regions) {
    if (r.members.empty()) {
      out.push_back({Kind::Empty, r.id, -1, "region " + std::to_string(r.id) + " is empty"});
      continue;
    }
    bool known = true;
    for (int m : r.members) {
      if (m < 0 || m >= net.num_internal()) {
        out.push_back({Kind::UnknownIntersection, r.id, m,
                       "region " + std::to_string(r.id) + " references unknown intersection " + std::to_string(m)});
        known = false;
        continue;
      }
      if (owner[m] >= 0) {
        out.push_back({Kind::Duplicate, r.id, m,
                       "intersection " + std::to_string(m) + " is a duplicate member of regions " +
                           std::to_string(owner[m]) + " and " + std::to_string(r.id)});
      } else {
        owner[m] = r.id;
      }
    }
    if (!known) continue;
    bool star = false;
    for (int c : r.members) star = star || is_star(net, c, r.members);
    if (!star)
      out.push_back({Kind::NonStar, r.id, r.center,
                     "region " + std::to_string(r.id) + " is not a centre plus a subset of its neighbours"});
  }
  for (int v = 0; v < net.num_internal(); ++v)
    if (owner[v] < 0)
      out.push_back({Kind::Uncovered, -1, v, "intersection " + std::to_string(v) + " is not covered"});
  return out;
}

std::vector<std::vector<int>> parse_region_layout(std::istream& in) {
  static const std::regex line_re(R"(^\s*(\d+)\s*:\s*\[([^\]]*)\]\s*$)");
  std::vector<std::pair<int, std::vector<int>>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::smatch m;
    if (!std::regex_match(line, m, line_re))
      throw ValidationError({"layout line " + std::to_string(line_no) + ": expected `region_id: [ids]`"});
    std::vector<int> ids;
    std::string body = m[2].str();
    std::replace(body.begin(), body.end(), ',', ' ');
    std::istringstream ss(body);
    int id;
    while (ss >> id) ids.push_back(id);
    if (!ss.eof()) throw ValidationError({"layout line " + std::to_string(line_no) + ": non-integer id"});
    rows.emplace_back(std::stoi(m[1].str()), std::move(ids));
  }
  std::sort(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.first < b.first; });
  std::vector<std::vector<int>> out;
  for (auto& r : rows) out.push_back(std::move(r.second));
  return out;
}

void write_region_layout(std::ostream& out, const std::vector<Region>& regions) {
  for (const auto& r : regions) {
    out << r.id << ": [";
    for (std::size_t i = 0; i < r.members.size(); ++i) out << (i ? ", " : "") << r.members[i];
    out << "]\n";
  }
}

std::vector<PaddedRegion> pad_regions(const Network& net, const std::vector<Region>& regions, int max_region_size,
                                      int max_lanes_per_intersection) {
  std::vector<PaddedRegion> out;
  for (const auto& r : regions) {
    if (static_cast<int>(r.members.size()) > max_region_size)
      throw std::invalid_argument("pad_regions: region " + std::to_string(r.id) + " exceeds max_region_size");
    PaddedRegion p;
    p.region = r;
    for (int m : r.members) {
      if (m < 0 || m >= net.num_internal())
        throw std::invalid_argument("pad_regions: region references unknown intersection");
      const auto& in = net.incoming_lanes(m);
      if (static_cast<int>(in.size()) > max_lanes_per_intersection)
        throw std::invalid_argument("pad_regions: intersection exceeds max_lanes_per_intersection");
      p.slots.push_back(m);
      std::vector<int> lanes(in.begin(), in.end());
      lanes.resize(max_lanes_per_intersection, -1);
      p.lane_slots.push_back(std::move(lanes));
    }
    while (static_cast<int>(p.slots.size()) < max_region_size) {
      p.slots.push_back(-1);
      p.lane_slots.emplace_back(max_lanes_per_intersection, -1);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace tsc
