#pragma once

// Congestion-level based clustering of links into connected control regions.

#include <algorithm>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "urbanflow/congestion.hpp"
#include "urbanflow/network.hpp"

namespace urbanflow {

enum class StrategyKind { PreTimed, ScatsLike, Optimized, Hybrid };

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::PreTimed: return "pretimed";
    case StrategyKind::ScatsLike: return "scats";
    case StrategyKind::Optimized: return "optimized";
    case StrategyKind::Hybrid: return "hybrid";
  }
  return "?";
}

struct Region {
  int id = 0;
  std::vector<int> links;          // ascending
  std::vector<int> intersections;  // ascending; controlled by this region
  CongestionLevel level = CongestionLevel::Free;
  StrategyKind strategy = StrategyKind::PreTimed;
};

// A link whose upstream and downstream intersections are controlled by
// different regions.
struct BoundaryLink {
  int link = 0;
  int exporting_region = 0;  // owns the upstream intersection
  int importing_region = 0;  // owns the downstream intersection
};

struct Partition {
  std::vector<Region> regions;
  std::vector<BoundaryLink> boundary_links;  // ascending by link
  std::vector<int> region_of_link;
  std::vector<int> region_of_intersection;
};

namespace detail {

// Intersections follow the region of their most congested approach (ties:
// lowest link id); boundary links are derived from that assignment.
inline void finish_partition(const Network& net, std::span<const CongestionLevel> levels, Partition& p) {
  p.region_of_intersection.assign(net.intersection_count(), kNone);
  for (auto& r : p.regions) {
    std::sort(r.links.begin(), r.links.end());
    r.intersections.clear();
  }
  for (std::size_t x = 0; x < net.intersection_count(); ++x) {
    int best = kNone;
    for (int l : net.incoming_links(static_cast<int>(x)))
      if (best == kNone || levels[static_cast<std::size_t>(l)] > levels[static_cast<std::size_t>(best)] ||
          (levels[static_cast<std::size_t>(l)] == levels[static_cast<std::size_t>(best)] && l < best))
        best = l;
    if (best == kNone) continue;
    const int r = p.region_of_link[static_cast<std::size_t>(best)];
    p.region_of_intersection[x] = r;
    p.regions[static_cast<std::size_t>(r)].intersections.push_back(static_cast<int>(x));
  }
  p.boundary_links.clear();
  for (std::size_t l = 0; l < net.link_count(); ++l) {
    const int up = net.upstream_intersection(static_cast<int>(l));
    const int down = net.downstream_intersection(static_cast<int>(l));
    if (up == kNone || down == kNone) continue;
    const int ru = p.region_of_intersection[static_cast<std::size_t>(up)];
    const int rd = p.region_of_intersection[static_cast<std::size_t>(down)];
    if (ru != rd) p.boundary_links.push_back(BoundaryLink{static_cast<int>(l), ru, rd});
  }
}

}  // namespace detail

// Region growing: seed at the unassigned link with the highest level (ties:
// lowest id), breadth-first over adjacent same-level links until exhausted or
// `max_region_size` is reached; repeat. Singleton regions are then merged into
// their lowest-level neighbouring region (ties: lowest region id).
inline Partition cluster_links(const Network& net, std::span<const CongestionLevel> levels,
                               std::size_t max_region_size = std::numeric_limits<std::size_t>::max()) {
  const std::size_t nl = net.link_count();
  if (levels.size() != nl) throw IndexMismatch("levels must cover every link");
  max_region_size = std::max<std::size_t>(max_region_size, 1);

  std::vector<int> order(nl);
  for (std::size_t i = 0; i < nl; ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return levels[static_cast<std::size_t>(a)] > levels[static_cast<std::size_t>(b)];
  });

  std::vector<int> owner(nl, kNone);
  std::vector<std::vector<int>> members;
  std::vector<CongestionLevel> region_level;
  for (int seed : order) {
    if (owner[static_cast<std::size_t>(seed)] != kNone) continue;
    const int rid = static_cast<int>(members.size());
    const CongestionLevel lvl = levels[static_cast<std::size_t>(seed)];
    members.push_back({seed});
    region_level.push_back(lvl);
    owner[static_cast<std::size_t>(seed)] = rid;
    std::queue<int> frontier;
    frontier.push(seed);
    while (!frontier.empty() && members.back().size() < max_region_size) {
      const int l = frontier.front();
      frontier.pop();
      for (int nb : net.adjacent_links(l)) {
        if (members.back().size() >= max_region_size) break;
        if (owner[static_cast<std::size_t>(nb)] != kNone || levels[static_cast<std::size_t>(nb)] != lvl) continue;
        owner[static_cast<std::size_t>(nb)] = rid;
        members.back().push_back(nb);
        frontier.push(nb);
      }
    }
  }

  // Merge singletons. Merging into an adjacent region keeps it connected.
  for (std::size_t r = 0; r < members.size(); ++r) {
    if (members[r].size() != 1) continue;
    const int l = members[r].front();
    int target = kNone;
    for (int nb : net.adjacent_links(l)) {
      const int cand = owner[static_cast<std::size_t>(nb)];
      if (cand == static_cast<int>(r)) continue;
      if (target == kNone || region_level[static_cast<std::size_t>(cand)] < region_level[static_cast<std::size_t>(target)] ||
          (region_level[static_cast<std::size_t>(cand)] == region_level[static_cast<std::size_t>(target)] && cand < target))
        target = cand;
    }
    if (target == kNone) continue;
    members[static_cast<std::size_t>(target)].push_back(l);
    owner[static_cast<std::size_t>(l)] = target;
    members[r].clear();
  }

  Partition p;
  p.region_of_link.assign(nl, kNone);
  for (std::size_t r = 0; r < members.size(); ++r) {
    if (members[r].empty()) continue;
    Region region;
    region.id = static_cast<int>(p.regions.size());
    region.links = members[r];
    region.level = region_level[r];
    for (int l : region.links) p.region_of_link[static_cast<std::size_t>(l)] = region.id;
    p.regions.push_back(std::move(region));
  }
  detail::finish_partition(net, levels, p);
  return p;
}

// Every link in one region at the given level.
inline Partition single_region(const Network& net, CongestionLevel level) {
  std::vector<CongestionLevel> levels(net.link_count(), level);
  Partition p;
  Region r;
  r.id = 0;
  r.level = level;
  for (std::size_t l = 0; l < net.link_count(); ++l) r.links.push_back(static_cast<int>(l));
  p.regions.push_back(std::move(r));
  p.region_of_link.assign(net.link_count(), 0);
  detail::finish_partition(net, levels, p);
  return p;
}

inline std::string summarize(const Partition& p) {
  std::string out;
  for (const auto& r : p.regions) {
    if (!out.empty()) out += ';';
    out += std::to_string(r.id) + ':' + to_string(r.level) + ':' + to_string(r.strategy) + ':' +
           std::to_string(r.links.size()) + 'L' + std::to_string(r.intersections.size()) + 'X';
  }
  return out;
}

}  // namespace urbanflow
