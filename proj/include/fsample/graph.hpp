#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fsample {

using NodeId = std::uint64_t;
using EdgeOffset = std::uint64_t;

/// Coordinate-format edge list. Edge i points from src[i] into dst[i]; dst is
/// the row (X) and src the column (Y) of the adjacency entry.
struct CooGraph {
  std::uint64_t num_nodes = 0;
  std::vector<NodeId> dst;
  std::vector<NodeId> src;

  std::size_t nnz() const { return dst.size(); }
  bool operator==(const CooGraph&) const = default;
};

/// Destination-indexed compressed adjacency: the entries of row v,
/// col_idx[row_ptr[v] .. row_ptr[v+1]), are the in-neighbors of v.
///
/// Square graphs have num_sources() == num_nodes(). Sampled blocks are
/// bipartite: rows are destination locals and entries are source locals
/// bounded by num_sources().
class CscGraph {
 public:
  CscGraph();

  /// Square graph over `num_nodes` nodes. Validates every invariant.
  CscGraph(std::uint64_t num_nodes, std::vector<EdgeOffset> row_ptr, std::vector<NodeId> col_idx);

  /// Rectangular graph; entries must be < num_sources.
  CscGraph(std::uint64_t num_rows, std::uint64_t num_sources, std::vector<EdgeOffset> row_ptr,
           std::vector<NodeId> col_idx);

  /// Skips validation. Only for kernels that construct the arrays themselves.
  static CscGraph from_trusted(std::uint64_t num_rows, std::uint64_t num_sources,
                               std::vector<EdgeOffset> row_ptr, std::vector<NodeId> col_idx);

  std::uint64_t num_nodes() const { return num_rows_; }
  std::uint64_t num_sources() const { return num_sources_; }
  std::size_t nnz() const { return col_idx_.size(); }

  /// O(1) view of the in-neighbors of v. Throws ContractViolation when v is
  /// out of range.
  std::span<const NodeId> in_neighbors(NodeId v) const;
  std::uint64_t in_degree(NodeId v) const;

  /// Unchecked variants for hot loops.
  std::span<const NodeId> in_neighbors_unchecked(NodeId v) const {
    return {col_idx_.data() + row_ptr_[v], col_idx_.data() + row_ptr_[v + 1]};
  }

  std::span<const EdgeOffset> row_ptr() const { return row_ptr_; }
  std::span<const NodeId> col_idx() const { return col_idx_; }

  bool operator==(const CscGraph&) const = default;

 private:
  std::uint64_t num_rows_ = 0;
  std::uint64_t num_sources_ = 0;
  std::vector<EdgeOffset> row_ptr_;
  std::vector<NodeId> col_idx_;
};

enum class Dedup : bool { keep = false, remove = true };

/// Counting-sort conversion. Rows store sources in ascending order so the
/// result is canonical. Throws MalformedInputError on out-of-range ids.
CscGraph build_csc(const CooGraph& edges, Dedup dedup = Dedup::keep);

/// Destination-major, ascending-source COO. Inverse of build_csc on canonical
/// graphs.
CooGraph csc_to_coo(const CscGraph& g);

/// Exactly `num_edges` distinct (dst, src) pairs drawn uniformly from n*n,
/// returned in (dst, src) lexicographic order.
CooGraph generate_erdos_renyi(std::uint64_t num_nodes, std::uint64_t num_edges, std::uint64_t seed);

struct RmatProbabilities {
  double a = 0.57;
  double b = 0.19;
  double c = 0.19;
  double d = 0.05;
};

/// Recursive-matrix generator over 2^scale nodes emitting edge_factor * 2^scale
/// edges in generation order; duplicates and self-loops are kept. Quadrant a is
/// (src high half = 0, dst high half = 0), b is (0, 1), c is (1, 0), d is (1, 1).
CooGraph generate_rmat(unsigned scale, std::uint64_t edge_factor, RmatProbabilities probs,
                       std::uint64_t seed);

/// Row-major f32 node features.
struct FeatureMatrix {
  std::uint64_t num_nodes = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::uint64_t num_nodes, std::uint32_t dim);
  FeatureMatrix(std::uint64_t num_nodes, std::uint32_t dim, std::vector<float> data);

  std::span<const float> row(NodeId v) const {
    return {data.data() + v * dim, static_cast<std::size_t>(dim)};
  }
  std::span<float> row(NodeId v) { return {data.data() + v * dim, static_cast<std::size_t>(dim)}; }

  bool operator==(const FeatureMatrix&) const = default;
};

/// Features uniform in [-1, 1), a pure function of seed.
FeatureMatrix generate_features(std::uint64_t num_nodes, std::uint32_t dim, std::uint64_t seed);

/// Sorted, duplicate-free set of labeled nodes.
class LabelSet {
 public:
  LabelSet() = default;
  /// Validates strict ordering and range when num_nodes is provided.
  explicit LabelSet(std::vector<NodeId> nodes, std::uint64_t num_nodes = UINT64_MAX);

  /// Sorts and deduplicates before validating.
  static LabelSet from_unsorted(std::vector<NodeId> nodes, std::uint64_t num_nodes = UINT64_MAX);

  std::span<const NodeId> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  bool contains(NodeId v) const;

  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<NodeId> nodes_;
};

/// Each node is labeled independently with probability `fraction`.
LabelSet generate_labels(std::uint64_t num_nodes, double fraction, std::uint64_t seed);

// File formats. All binary formats are little-endian.

constexpr std::uint32_t kFormatVersion = 1;

void write_graph(std::ostream& out, const CscGraph& g, unsigned index_width = 8);
CscGraph read_graph(std::istream& in);
void write_graph(const std::string& path, const CscGraph& g, unsigned index_width = 8);
CscGraph read_graph(const std::string& path);

void write_features(std::ostream& out, const FeatureMatrix& f);
FeatureMatrix read_features(std::istream& in);
void write_features(const std::string& path, const FeatureMatrix& f);
FeatureMatrix read_features(const std::string& path);

/// "src dst" per line; '#' lines and blank lines are skipped. When num_nodes
/// is 0 it is inferred as max id + 1.
CooGraph read_edgelist_text(std::istream& in, std::uint64_t num_nodes = 0);
CooGraph read_edgelist_text(const std::string& path, std::uint64_t num_nodes = 0);
void write_edgelist_text(std::ostream& out, const CooGraph& g);

void write_labels(std::ostream& out, const LabelSet& labels);
LabelSet read_labels(std::istream& in, std::uint64_t num_nodes = UINT64_MAX);
void write_labels(const std::string& path, const LabelSet& labels);
LabelSet read_labels(const std::string& path, std::uint64_t num_nodes = UINT64_MAX);

}  // namespace fsample
