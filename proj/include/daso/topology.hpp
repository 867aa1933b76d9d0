#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "daso/errors.hpp"

namespace daso {

/// Homogeneous node-based cluster: every node carries the same number of GPUs.
struct ClusterSpec {
  int num_nodes = 1;
  int gpus_per_node = 1;

  int world_size() const { return num_nodes * gpus_per_node; }

  void validate() const {
    if (num_nodes < 1) throw ConfigError("cluster.num_nodes must be >= 1");
    if (gpus_per_node < 1) throw ConfigError("cluster.gpus_per_node must be >= 1");
  }

  friend bool operator==(const ClusterSpec&, const ClusterSpec&) = default;
};

struct RankId {
  int global_rank = 0;
  int node_id = 0;
  int local_rank = 0;

  friend bool operator==(const RankId&, const RankId&) = default;
};

// Node-major dense mapping: global_rank = node_id * gpus_per_node + local_rank.
inline RankId rank_lookup(const ClusterSpec& spec, int global_rank) {
  if (global_rank < 0 || global_rank >= spec.world_size()) {
    throw RangeError("rank " + std::to_string(global_rank) + " outside world of size " +
                     std::to_string(spec.world_size()));
  }
  return RankId{global_rank, global_rank / spec.gpus_per_node,
                global_rank % spec.gpus_per_node};
}

/// Global groups (one GPU per node, same local rank) and node-local groups.
struct GroupMap {
  ClusterSpec spec;
  std::vector<std::vector<int>> groups;       // indexed by local_rank
  std::vector<std::vector<int>> node_groups;  // indexed by node_id

  int num_groups() const { return static_cast<int>(groups.size()); }
};

inline GroupMap build_group_map(const ClusterSpec& spec) {
  spec.validate();
  GroupMap map;
  map.spec = spec;
  map.groups.assign(spec.gpus_per_node, {});
  map.node_groups.assign(spec.num_nodes, {});
  for (int rank = 0; rank < spec.world_size(); ++rank) {
    const RankId id = rank_lookup(spec, rank);
    map.groups[id.local_rank].push_back(rank);
    map.node_groups[id.node_id].push_back(rank);
  }
  return map;
}

// Ascending local-rank round robin.
inline int active_sync_group(const GroupMap& map, std::size_t cycle_index) {
  return static_cast<int>(cycle_index % map.groups.size());
}

}  // namespace daso
