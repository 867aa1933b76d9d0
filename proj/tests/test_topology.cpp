#include <gtest/gtest.h>

#include <vector>

#include "daso/topology.hpp"

using namespace daso;

using Groups = std::vector<std::vector<int>>;

TEST(Topology, TwoNodesFourGpus) {
  const GroupMap m = build_group_map({2, 4});
  EXPECT_EQ(m.groups, (Groups{{0, 4}, {1, 5}, {2, 6}, {3, 7}}));
  EXPECT_EQ(m.node_groups, (Groups{{0, 1, 2, 3}, {4, 5, 6, 7}}));
}

TEST(Topology, SingleRank) {
  const GroupMap m = build_group_map({1, 1});
  EXPECT_EQ(m.groups, (Groups{{0}}));
  EXPECT_EQ(m.node_groups, (Groups{{0}}));
}

TEST(Topology, ThreeNodesTwoGpus) {
  const GroupMap m = build_group_map({3, 2});
  EXPECT_EQ(m.groups, (Groups{{0, 2, 4}, {1, 3, 5}}));
  EXPECT_EQ(m.node_groups, (Groups{{0, 1}, {2, 3}, {4, 5}}));
}

TEST(Topology, RankLookup) {
  const ClusterSpec spec{2, 4};
  EXPECT_EQ(rank_lookup(spec, 6), (RankId{6, 1, 2}));
  EXPECT_EQ(rank_lookup(spec, 0), (RankId{0, 0, 0}));
  EXPECT_THROW(rank_lookup(spec, 8), RangeError);
  EXPECT_THROW(rank_lookup(spec, -1), RangeError);
}

TEST(Topology, RejectsEmptyCluster) {
  EXPECT_THROW(build_group_map({0, 4}), ConfigError);
  EXPECT_THROW(build_group_map({2, 0}), ConfigError);
}

TEST(Topology, ActiveGroupExamples) {
  const GroupMap four = build_group_map({2, 4});
  EXPECT_EQ(active_sync_group(four, 0), 0);
  EXPECT_EQ(active_sync_group(four, 5), 1);
  const GroupMap one = build_group_map({3, 1});
  for (std::size_t c : {0u, 1u, 17u, 1000u}) EXPECT_EQ(active_sync_group(one, c), 0);
}

// Every rank in exactly one global group and one node group, for every
// cluster shape up to 1024 ranks.
TEST(Topology, PartitionPropertyExhaustive) {
  for (int nodes = 1; nodes <= 1024; ++nodes) {
    for (int gpus = 1; nodes * gpus <= 1024; ++gpus) {
      const GroupMap m = build_group_map({nodes, gpus});
      const int world = nodes * gpus;
      std::vector<int> in_group(world, 0), in_node(world, 0);
      ASSERT_EQ(m.num_groups(), gpus);
      ASSERT_EQ(static_cast<int>(m.node_groups.size()), nodes);
      for (const auto& g : m.groups) {
        ASSERT_EQ(static_cast<int>(g.size()), nodes);
        for (int r : g) ++in_group[r];
      }
      for (const auto& n : m.node_groups) {
        ASSERT_EQ(static_cast<int>(n.size()), gpus);
        for (int r : n) ++in_node[r];
      }
      for (int r = 0; r < world; ++r) {
        ASSERT_EQ(in_group[r], 1) << nodes << "x" << gpus << " rank " << r;
        ASSERT_EQ(in_node[r], 1) << nodes << "x" << gpus << " rank " << r;
      }
      // group k holds local rank k on every node
      for (int k = 0; k < gpus; ++k) {
        for (int j = 0; j < nodes; ++j) {
          const RankId id = rank_lookup(m.spec, m.groups[k][j]);
          ASSERT_EQ(id.local_rank, k);
          ASSERT_EQ(id.node_id, j);
        }
      }
    }
  }
}

TEST(Topology, RotationVisitsEveryGroupOncePerPeriod) {
  for (int gpus : {1, 2, 3, 4, 8}) {
    const GroupMap m = build_group_map({2, gpus});
    for (std::size_t start : {0u, 3u, 11u}) {
      std::vector<int> seen(gpus, 0);
      for (int i = 0; i < gpus; ++i) ++seen[active_sync_group(m, start + i)];
      for (int s : seen) EXPECT_EQ(s, 1);
      EXPECT_EQ(active_sync_group(m, start), active_sync_group(m, start + gpus));
    }
  }
}
