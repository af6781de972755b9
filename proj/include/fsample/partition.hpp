#pragma once

// Edge-cut partitioning: node -> machine maps, per-machine topology and
// feature stores, and the topology-versus-feature storage breakdown.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsample/graph.hpp"

namespace fsample {

using MachineId = std::uint32_t;

class PartitionMap {
 public:
  PartitionMap() = default;
  /// Validates that every entry is < num_machines.
  PartitionMap(std::vector<MachineId> assignment, std::uint32_t num_machines);

  std::uint32_t num_machines() const { return num_machines_; }
  std::uint64_t num_nodes() const { return assignment_.size(); }
  MachineId owner(NodeId v) const { return assignment_[v]; }
  std::span<const MachineId> assignment() const { return assignment_; }

  /// Ascending ids of the nodes assigned to `machine`.
  std::vector<NodeId> owned_nodes(MachineId machine) const;
  std::vector<std::uint64_t> node_counts() const;

  bool operator==(const PartitionMap&) const = default;

 private:
  std::vector<MachineId> assignment_;
  std::uint32_t num_machines_ = 1;
};

/// assignment[v] = v mod P.
PartitionMap partition_hash(std::uint64_t num_nodes, std::uint32_t num_machines);

/// Streaming linear-deterministic-greedy stand-in for a multilevel
/// partitioner. Nodes are streamed in ascending id order; each goes to the
/// feasible machine holding most of its (in or out) neighbors, ties broken by
/// lower load then lower machine id. Capacities are hard:
///   nodes per machine   <= floor((1 + slack) * ceil(n / P))
///   labeled per machine <= floor((1 + slack) * ceil(|labels| / P))
/// A placement is feasible only if the remaining labeled nodes still fit.
PartitionMap partition_greedy(const CscGraph& g, std::uint32_t num_machines, const LabelSet& labels,
                              double capacity_slack = 0.05);

std::uint64_t edge_cut(const CscGraph& g, const PartitionMap& pmap);

struct BalanceStats {
  std::vector<std::uint64_t> nodes;
  std::vector<std::uint64_t> labeled;
  std::vector<std::uint64_t> in_edges;
};
BalanceStats balance_stats(const CscGraph& g, const PartitionMap& pmap, const LabelSet& labels);

/// Owned nodes and all of their incoming edges (sources keep global ids).
struct GraphPartition {
  MachineId machine_id = 0;
  std::vector<NodeId> owned_nodes;  ///< ascending
  CscGraph local_csc;               ///< row i = in-neighbors of owned_nodes[i]

  /// Local row of a global id, or nullopt when this machine does not own it.
  std::optional<std::size_t> local_row(NodeId v) const;
  std::span<const NodeId> in_neighbors(NodeId v) const;
};

GraphPartition build_graph_partition(const CscGraph& g, const PartitionMap& pmap,
                                     MachineId machine);

/// Feature rows of the owned nodes, in ascending node order.
struct FeatureShard {
  MachineId machine_id = 0;
  std::vector<NodeId> owned_nodes;
  FeatureMatrix rows;

  std::optional<std::size_t> lookup(NodeId v) const;
  std::span<const float> row(NodeId v) const;  ///< throws ProtocolError if not owned
  std::uint32_t dim() const { return rows.dim; }
};

FeatureShard build_feature_shard(const FeatureMatrix& f, const PartitionMap& pmap,
                                 MachineId machine);

struct StorageReport {
  std::uint64_t topology_bytes = 0;
  std::uint64_t feature_bytes = 0;
  double topology_fraction = 0.0;
};

/// topology = (num_nodes + 1 + nnz) * index_width,
/// features = num_nodes * feat_dim * feat_bytes_per_elem.
StorageReport storage_report(std::uint64_t num_nodes, std::uint64_t nnz, std::uint64_t feat_dim,
                             std::uint64_t feat_bytes_per_elem, std::uint64_t index_width);

// Partition map files. Text: "node_id machine_id" per line. Binary: "FSPM".

void write_partition_map_text(std::ostream& out, const PartitionMap& pmap);
/// Every node in [0, num_nodes) must appear exactly once and every machine id
/// must be < num_machines.
PartitionMap read_partition_map_text(std::istream& in, std::uint64_t num_nodes,
                                     std::uint32_t num_machines);
void write_partition_map(std::ostream& out, const PartitionMap& pmap);
/// Binary read; num_nodes is checked when non-zero.
PartitionMap read_partition_map(std::istream& in, std::uint64_t expected_num_nodes = 0);

void write_partition_map(const std::string& path, const PartitionMap& pmap);
/// Chooses binary or text by sniffing the magic. Text files need num_machines.
PartitionMap read_partition_map(const std::string& path, std::uint64_t expected_num_nodes,
                                std::uint32_t num_machines = 0);

}  // namespace fsample
