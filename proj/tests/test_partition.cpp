#include <gtest/gtest.h>

#include "support.hpp"

using namespace urbanflow;
using namespace urbanflow::testing;

using L = CongestionLevel;

TEST(Cluster, UniformLevelsGiveOneRegion) {
  const Scenario sc = make_grid_scenario();
  for (L level : {L::Free, L::Moderate, L::Congested}) {
    const std::vector<L> levels(sc.network.link_count(), level);
    const Partition p = cluster_links(sc.network, levels);
    ASSERT_EQ(p.regions.size(), 1u);
    EXPECT_EQ(p.regions[0].links.size(), sc.network.link_count());
    EXPECT_EQ(p.regions[0].intersections.size(), sc.network.intersection_count());
    EXPECT_EQ(p.regions[0].level, level);
    EXPECT_TRUE(p.boundary_links.empty());
  }
}

TEST(Cluster, LineWithCongestedPairAtOneEnd) {
  // BFS from link 0 takes {0, 1}; the free remainder {2..5} is the second
  // region; no singleton is left to merge.
  const Network net = line_network(6);
  const std::vector<L> levels{L::Congested, L::Congested, L::Free, L::Free, L::Free, L::Free};
  const Partition p = cluster_links(net, levels);
  ASSERT_EQ(p.regions.size(), 2u);
  EXPECT_EQ(p.regions[0].links, (std::vector<int>{0, 1}));
  EXPECT_EQ(p.regions[0].level, L::Congested);
  EXPECT_EQ(p.regions[1].links, (std::vector<int>{2, 3, 4, 5}));
  EXPECT_EQ(partition_violation(net, p), "");
}

TEST(Cluster, SingletonMergesIntoLowestLevelNeighbour) {
  // Link 2 is alone at Moderate between a Congested pair and a Free tail.
  const Network net = line_network(6);
  const std::vector<L> levels{L::Congested, L::Congested, L::Moderate, L::Free, L::Free, L::Free};
  const Partition p = cluster_links(net, levels);
  ASSERT_EQ(p.regions.size(), 2u);
  EXPECT_EQ(p.regions[1].links, (std::vector<int>{2, 3, 4, 5}));
  EXPECT_EQ(p.regions[1].level, L::Free);
}

TEST(Cluster, MaxRegionSizeSplits) {
  const Network net = line_network(6);
  const std::vector<L> levels(6, L::Free);
  const Partition p = cluster_links(net, levels, 3);
  ASSERT_EQ(p.regions.size(), 2u);
  EXPECT_EQ(p.regions[0].links, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(p.regions[1].links, (std::vector<int>{3, 4, 5}));
  // X2 (link 2 -> 3) is controlled by region 0, X3 by region 1: link 3 is cut.
  ASSERT_EQ(p.boundary_links.size(), 1u);
  EXPECT_EQ(p.boundary_links[0].link, 3);
  EXPECT_EQ(p.boundary_links[0].exporting_region, 0);
  EXPECT_EQ(p.boundary_links[0].importing_region, 1);
  EXPECT_EQ(partition_violation(net, p), "");
}

TEST(Cluster, RejectsLevelCountMismatch) {
  const Network net = line_network(4);
  EXPECT_THROW(cluster_links(net, std::vector<L>(3, L::Free)), IndexMismatch);
}

TEST(Cluster, RandomLevelsOnFourByFourGrid) {
  GridOptions o;
  o.rows = o.cols = 4;
  o.cross_columns = {1, 2};
  const Scenario sc = make_grid_scenario(o);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto levels = random_levels(sc.network.link_count(), rng);
    const std::size_t cap = trial % 3 == 0 ? 6 : SIZE_MAX;
    const Partition p = cluster_links(sc.network, levels, cap);
    ASSERT_EQ(partition_violation(sc.network, p), "") << "trial " << trial;
    const Partition again = cluster_links(sc.network, levels, cap);
    EXPECT_EQ(summarize(p), summarize(again));
    EXPECT_EQ(p.region_of_link, again.region_of_link);
  }
}

TEST(Cluster, IntersectionFollowsMostCongestedApproach) {
  const Network net = line_network(4);
  const std::vector<L> levels{L::Free, L::Free, L::Congested, L::Congested};
  const Partition p = cluster_links(net, levels);
  // X1 joins links 1 -> 2; its only approach is Free link 1.
  EXPECT_EQ(p.region_of_intersection[1], p.region_of_link[1]);
  EXPECT_EQ(p.region_of_intersection[2], p.region_of_link[2]);
}

TEST(HybridAssign, LevelToStrategy) {
  const Network net = line_network(6);
  std::vector<L> levels{L::Congested, L::Congested, L::Free, L::Free, L::Free, L::Free};
  Partition p = cluster_links(net, levels);
  EXPECT_EQ(hybrid_assign(p), (std::vector<StrategyKind>{StrategyKind::Optimized, StrategyKind::PreTimed}));
  Partition free_all = cluster_links(net, std::vector<L>(6, L::Free));
  EXPECT_EQ(hybrid_assign(free_all), std::vector<StrategyKind>{StrategyKind::PreTimed});
  Partition jam = cluster_links(net, std::vector<L>(6, L::Congested));
  EXPECT_EQ(hybrid_assign(jam), std::vector<StrategyKind>{StrategyKind::Optimized});
  Partition mid = cluster_links(net, std::vector<L>(6, L::Moderate));
  EXPECT_EQ(hybrid_assign(mid), std::vector<StrategyKind>{StrategyKind::ScatsLike});
}
