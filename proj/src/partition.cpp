#include "fsample/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fsample/bytes.hpp"
#include "fsample/error.hpp"

namespace fsample {

PartitionMap::PartitionMap(std::vector<MachineId> assignment, std::uint32_t num_machines)
    : assignment_(std::move(assignment)), num_machines_(num_machines) {
  if (num_machines_ < 1) throw ParameterError("partition map needs at least one machine");
  for (std::size_t v = 0; v < assignment_.size(); ++v) {
    if (assignment_[v] >= num_machines_) {
      throw MalformedInputError("node " + std::to_string(v) + " assigned to machine " +
                                std::to_string(assignment_[v]) + " of " +
                                std::to_string(num_machines_));
    }
  }
}

std::vector<NodeId> PartitionMap::owned_nodes(MachineId machine) const {
  std::vector<NodeId> out;
  for (NodeId v = 0; v < assignment_.size(); ++v) {
    if (assignment_[v] == machine) out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> PartitionMap::node_counts() const {
  std::vector<std::uint64_t> counts(num_machines_, 0);
  for (MachineId m : assignment_) ++counts[m];
  return counts;
}

PartitionMap partition_hash(std::uint64_t num_nodes, std::uint32_t num_machines) {
  if (num_machines < 1) throw ParameterError("machine count must be at least 1");
  std::vector<MachineId> assignment(num_nodes);
  for (NodeId v = 0; v < num_nodes; ++v) assignment[v] = static_cast<MachineId>(v % num_machines);
  return PartitionMap(std::move(assignment), num_machines);
}

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::uint64_t capacity(std::uint64_t total, std::uint32_t parts, double slack) {
  return static_cast<std::uint64_t>(
      std::floor((1.0 + slack) * static_cast<double>(ceil_div(total, parts))));
}

// Out-neighbor lists (transpose of the in-neighbor CSC).
CscGraph transpose(const CscGraph& g) {
  CooGraph coo;
  coo.num_nodes = g.num_nodes();
  coo.dst.assign(g.col_idx().begin(), g.col_idx().end());
  coo.src.reserve(g.nnz());
  for (NodeId v = 0; v < g.num_nodes(); ++v) coo.src.insert(coo.src.end(), g.in_degree(v), v);
  return build_csc(coo);
}

}  // namespace

PartitionMap partition_greedy(const CscGraph& g, std::uint32_t num_machines, const LabelSet& labels,
                              double capacity_slack) {
  if (num_machines < 1) throw ParameterError("machine count must be at least 1");
  if (!(capacity_slack >= 0.0) || !std::isfinite(capacity_slack)) {
    throw ParameterError("capacity slack must be a finite non-negative ratio");
  }
  const std::uint64_t n = g.num_nodes();
  for (NodeId v : labels.nodes()) {
    if (v >= n) throw ParameterError("labeled node out of range");
  }
  const std::uint64_t node_cap = capacity(n, num_machines, capacity_slack);
  const std::uint64_t label_cap = capacity(labels.size(), num_machines, capacity_slack);
  const CscGraph out_edges = transpose(g);

  constexpr MachineId kUnassigned = ~MachineId{0};
  std::vector<MachineId> assignment(n, kUnassigned);
  std::vector<std::uint64_t> nodes(num_machines, 0);
  std::vector<std::uint64_t> labeled(num_machines, 0);
  std::vector<std::uint64_t> affinity(num_machines, 0);
  std::uint64_t labels_left = labels.size();
  // Sum over machines of min(node room, label room): how many labeled nodes
  // can still be placed.
  auto label_slots = [&] {
    std::uint64_t total = 0;
    for (MachineId m = 0; m < num_machines; ++m) {
      total += std::min(node_cap - nodes[m], label_cap - labeled[m]);
    }
    return total;
  };
  auto label_iter = labels.nodes().begin();

  for (NodeId v = 0; v < n; ++v) {
    while (label_iter != labels.nodes().end() && *label_iter < v) ++label_iter;
    const bool is_labeled = label_iter != labels.nodes().end() && *label_iter == v;

    std::fill(affinity.begin(), affinity.end(), 0);
    for (NodeId u : g.in_neighbors_unchecked(v)) {
      if (assignment[u] != kUnassigned) ++affinity[assignment[u]];
    }
    for (NodeId u : out_edges.in_neighbors_unchecked(v)) {
      if (assignment[u] != kUnassigned) ++affinity[assignment[u]];
    }

    const std::uint64_t slots = label_slots();
    const std::uint64_t labels_after = labels_left - (is_labeled ? 1 : 0);
    MachineId best = kUnassigned;
    for (MachineId m = 0; m < num_machines; ++m) {
      if (nodes[m] >= node_cap) continue;
      if (is_labeled && labeled[m] >= label_cap) continue;
      // Slots lost by placing v on m.
      const std::uint64_t before = std::min(node_cap - nodes[m], label_cap - labeled[m]);
      const std::uint64_t after =
          std::min(node_cap - nodes[m] - 1, label_cap - labeled[m] - (is_labeled ? 1 : 0));
      if (slots - before + after < labels_after) continue;
      if (best == kUnassigned || affinity[m] > affinity[best] ||
          (affinity[m] == affinity[best] && nodes[m] < nodes[best])) {
        best = m;
      }
    }
    if (best == kUnassigned) {
      throw ParameterError("capacity slack leaves no feasible machine for node " +
                           std::to_string(v));
    }
    assignment[v] = best;
    ++nodes[best];
    if (is_labeled) {
      ++labeled[best];
      --labels_left;
    }
  }
  return PartitionMap(std::move(assignment), num_machines);
}

std::uint64_t edge_cut(const CscGraph& g, const PartitionMap& pmap) {
  if (pmap.num_nodes() != g.num_nodes()) {
    throw ParameterError("partition map size does not match graph");
  }
  std::uint64_t cut = 0;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    for (NodeId u : g.in_neighbors_unchecked(v)) cut += pmap.owner(u) != pmap.owner(v);
  }
  return cut;
}

BalanceStats balance_stats(const CscGraph& g, const PartitionMap& pmap, const LabelSet& labels) {
  BalanceStats s;
  s.nodes = pmap.node_counts();
  s.labeled.assign(pmap.num_machines(), 0);
  s.in_edges.assign(pmap.num_machines(), 0);
  for (NodeId v : labels.nodes()) ++s.labeled[pmap.owner(v)];
  for (NodeId v = 0; v < g.num_nodes(); ++v) s.in_edges[pmap.owner(v)] += g.in_degree(v);
  return s;
}

namespace {

std::optional<std::size_t> find_sorted(std::span<const NodeId> sorted, NodeId v) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
  if (it == sorted.end() || *it != v) return std::nullopt;
  return static_cast<std::size_t>(it - sorted.begin());
}

}  // namespace

std::optional<std::size_t> GraphPartition::local_row(NodeId v) const {
  return find_sorted(owned_nodes, v);
}

std::span<const NodeId> GraphPartition::in_neighbors(NodeId v) const {
  const auto row = local_row(v);
  if (!row) {
    throw ContractViolation("machine " + std::to_string(machine_id) + " does not own node " +
                            std::to_string(v));
  }
  return local_csc.in_neighbors_unchecked(*row);
}

GraphPartition build_graph_partition(const CscGraph& g, const PartitionMap& pmap,
                                     MachineId machine) {
  if (pmap.num_nodes() != g.num_nodes()) {
    throw ParameterError("partition map size does not match graph");
  }
  GraphPartition part;
  part.machine_id = machine;
  part.owned_nodes = pmap.owned_nodes(machine);
  std::vector<EdgeOffset> row_ptr(part.owned_nodes.size() + 1, 0);
  std::vector<NodeId> col_idx;
  for (std::size_t i = 0; i < part.owned_nodes.size(); ++i) {
    const auto nbrs = g.in_neighbors_unchecked(part.owned_nodes[i]);
    col_idx.insert(col_idx.end(), nbrs.begin(), nbrs.end());
    row_ptr[i + 1] = col_idx.size();
  }
  part.local_csc = CscGraph::from_trusted(part.owned_nodes.size(), g.num_nodes(),
                                          std::move(row_ptr), std::move(col_idx));
  return part;
}

std::optional<std::size_t> FeatureShard::lookup(NodeId v) const {
  return find_sorted(owned_nodes, v);
}

std::span<const float> FeatureShard::row(NodeId v) const {
  const auto idx = lookup(v);
  if (!idx) {
    throw ProtocolError("machine " + std::to_string(machine_id) + " holds no features for node " +
                        std::to_string(v));
  }
  return rows.row(*idx);
}

FeatureShard build_feature_shard(const FeatureMatrix& f, const PartitionMap& pmap,
                                 MachineId machine) {
  if (pmap.num_nodes() != f.num_nodes) {
    throw ParameterError("partition map size does not match feature matrix");
  }
  FeatureShard shard;
  shard.machine_id = machine;
  shard.owned_nodes = pmap.owned_nodes(machine);
  shard.rows = FeatureMatrix(shard.owned_nodes.size(), f.dim);
  for (std::size_t i = 0; i < shard.owned_nodes.size(); ++i) {
    const auto src = f.row(shard.owned_nodes[i]);
    std::copy(src.begin(), src.end(), shard.rows.row(i).begin());
  }
  return shard;
}

StorageReport storage_report(std::uint64_t num_nodes, std::uint64_t nnz, std::uint64_t feat_dim,
                             std::uint64_t feat_bytes_per_elem, std::uint64_t index_width) {
  StorageReport r;
  r.topology_bytes = (num_nodes + 1 + nnz) * index_width;
  r.feature_bytes = num_nodes * feat_dim * feat_bytes_per_elem;
  const std::uint64_t total = r.topology_bytes + r.feature_bytes;
  r.topology_fraction =
      total == 0 ? 0.0 : static_cast<double>(r.topology_bytes) / static_cast<double>(total);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kMapMagic = "FSPM";

}  // namespace

void write_partition_map_text(std::ostream& out, const PartitionMap& pmap) {
  for (NodeId v = 0; v < pmap.num_nodes(); ++v) out << v << ' ' << pmap.owner(v) << '\n';
}

PartitionMap read_partition_map_text(std::istream& in, std::uint64_t num_nodes,
                                     std::uint32_t num_machines) {
  if (num_machines < 1) throw ParameterError("machine count must be at least 1");
  constexpr MachineId kMissing = ~MachineId{0};
  std::vector<MachineId> assignment(num_nodes, kMissing);
  std::string line;
  std::size_t line_no = 0;
  std::uint64_t seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    long long node = -1;
    long long machine = -1;
    std::string extra;
    if (!(fields >> node >> machine) || (fields >> extra) || node < 0 || machine < 0) {
      throw FormatError("partition map line " + std::to_string(line_no) + " is malformed");
    }
    if (static_cast<std::uint64_t>(node) >= num_nodes) {
      throw FormatError("partition map names node " + std::to_string(node) + " but graph has " +
                        std::to_string(num_nodes) + " nodes");
    }
    if (static_cast<std::uint64_t>(machine) >= num_machines) {
      throw FormatError("partition map line " + std::to_string(line_no) + ": machine " +
                        std::to_string(machine) + " >= " + std::to_string(num_machines));
    }
    if (assignment[node] != kMissing) {
      throw FormatError("node " + std::to_string(node) + " assigned twice");
    }
    assignment[node] = static_cast<MachineId>(machine);
    ++seen;
  }
  if (seen != num_nodes) {
    throw FormatError("partition map covers " + std::to_string(seen) + " of " +
                      std::to_string(num_nodes) + " nodes");
  }
  return PartitionMap(std::move(assignment), num_machines);
}

void write_partition_map(std::ostream& out, const PartitionMap& pmap) {
  Bytes buf;
  ByteWriter w(buf);
  w.put_magic(kMapMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint64_t>(pmap.num_nodes());
  w.put<std::uint32_t>(pmap.num_machines());
  w.put_array<std::uint32_t>(pmap.assignment());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write failed");
}

PartitionMap read_partition_map(std::istream& in, std::uint64_t expected_num_nodes) {
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r(data);
  if (!r.magic_matches(kMapMagic)) throw BadMagicError("expected magic FSPM");
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw VersionError("unsupported partition map version " + std::to_string(version));
  }
  const auto num_nodes = r.get<std::uint64_t>();
  const auto machines = r.get<std::uint32_t>();
  if (expected_num_nodes != 0 && num_nodes != expected_num_nodes) {
    throw FormatError("partition map has " + std::to_string(num_nodes) +
                      " nodes, graph has " + std::to_string(expected_num_nodes));
  }
  auto assignment = r.get_vector<std::uint32_t>(num_nodes);
  try {
    return PartitionMap(std::move(assignment), machines);
  } catch (const Error& e) {
    throw FormatError(e.what());
  }
}

void write_partition_map(const std::string& path, const PartitionMap& pmap) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_partition_map(out, pmap);
}

PartitionMap read_partition_map(const std::string& path, std::uint64_t expected_num_nodes,
                                std::uint32_t num_machines) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path + " for reading");
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::string_view(magic, 4) == kMapMagic;
  in.clear();
  in.seekg(0);
  if (binary) return read_partition_map(in, expected_num_nodes);
  if (num_machines == 0) {
    throw ParameterError("text partition maps need the machine count");
  }
  return read_partition_map_text(in, expected_num_nodes, num_machines);
}

}  // namespace fsample
