#pragma once

// Independent oracles: parameter-free mean propagation over sampled blocks
// and equivalence checks between kernels and between execution modes.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsample/dist.hpp"
#include "fsample/graph.hpp"
#include "fsample/sampler.hpp"

namespace fsample {

/// Propagates input rows (aligned to sample.input_nodes) from the deepest
/// block up. Each destination becomes the mean of its own previous vector
/// (include_dst only, added first) and its sampled sources in stored edge
/// order. Sums are accumulated in double and rounded to float once per layer.
/// A destination with nothing to average gets the zero vector.
/// Returns one row per blocks[0].dst_globals entry.
FeatureMatrix mean_propagate(const MiniBatchSample& sample, const FeatureMatrix& input_rows);

struct KernelCheckOptions {
  std::size_t trials = 200;
  std::uint64_t min_nodes = 1;
  std::uint64_t max_nodes = 200;
  double max_density = 0.5;  ///< nnz up to max_density * n^2
  std::uint32_t min_fanout = 1;
  std::uint32_t max_fanout = 16;
  std::uint64_t seed = 1;
};

struct KernelCheckFailure {
  std::size_t trial = 0;
  std::uint64_t instance_seed = 0;
  std::string message;
};

struct KernelCheckReport {
  std::size_t trials = 0;
  std::uint64_t sampled_edges = 0;
  std::vector<KernelCheckFailure> failures;
  bool passed() const { return failures.empty(); }
};

/// Random graph / batch / fanout instances; fused and two-step levels must be
/// bit-equal. Throws ParameterError when trials == 0.
KernelCheckReport check_kernel_equivalence(const KernelCheckOptions& opts);

/// Batch-independent view of a sampling run: the sampled source list of every
/// (level, destination) pair and the output row of every seed.
struct PerSeedView {
  std::map<std::pair<std::uint32_t, NodeId>, std::vector<NodeId>> rows;
  std::map<NodeId, std::vector<float>> outputs;
  /// First conflict while merging, if any (same key, different value).
  std::optional<std::string> conflict;

  void add(const MiniBatchSample& sample, const FeatureMatrix& outputs);
};

/// Exact comparison; returns a description of the first difference.
std::optional<std::string> compare_views(const PerSeedView& a, const PerSeedView& b);

struct DistCheckReport {
  bool blocks_equal = true;
  bool outputs_equal = true;
  double max_abs_diff = 0.0;
  std::size_t minibatches_checked = 0;
  std::vector<std::uint64_t> rounds_per_minibatch;  ///< union over ranks
  std::vector<std::string> mismatches;
  PerSeedView view;  ///< from the distributed run
  bool passed() const { return blocks_equal && outputs_equal; }
};

/// Runs one epoch on a P-rank in-process cluster and, independently, the
/// single-process pipeline on the same per-rank batches, then compares every
/// block and every output row bit for bit.
DistCheckReport check_dist_equivalence(const ClusterInputs& inputs, int num_workers,
                                       const FanoutPlan& plan, std::size_t batch_size,
                                       std::uint64_t epoch = 0);

/// Randomized round trips through every conversion and file format: COO and
/// CSC, graph files at both index widths, features, edge-list text, labels,
/// partition maps in both encodings, and block files. Each check demands
/// equality of values and, for binary formats, byte-identical re-encoding.
struct FormatCheckReport {
  std::size_t instances = 0;
  std::size_t checks = 0;
  std::vector<std::string> failures;
  bool passed() const { return failures.empty(); }
};
FormatCheckReport check_format_round_trips(std::size_t instances, std::uint64_t seed);

struct SamplingCheckOptions {
  std::size_t graphs = 100;
  std::size_t inclusion_trials = 100000;
  std::uint64_t seed = 1;
};

struct SamplingCheckReport {
  std::size_t blocks_checked = 0;
  std::uint64_t edges_checked = 0;
  /// Exact inclusion probability of one neighbor, by enumerating subsets.
  double expected_inclusion = 0.0;
  /// Largest |observed - expected| / sigma over the eight neighbors.
  double max_z = 0.0;
  std::vector<std::string> failures;
  bool passed() const { return failures.empty(); }
};

/// Row-length law and edge soundness on random minibatches, plus the marginal
/// inclusion frequency of each neighbor of a degree-8 node at fanout 4
/// (must stay within 5 sigma).
SamplingCheckReport check_sampling_contract(const SamplingCheckOptions& opts);

}  // namespace fsample
