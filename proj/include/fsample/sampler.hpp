#pragma once

// Per-level neighborhood sampling into message-flow-graph blocks.
//
// Two kernels produce bit-identical blocks:
//   * fused: samples straight into the block's row pointer, then a single
//     compaction pass through a dense node -> local-id map emits the column
//     indices and the source list. No COO is ever materialized.
//   * two-step: samples into a global-id COO edge list, relabels node ids
//     through a hash map, and converts the relabeled COO into compressed form.
//
// Randomness is keyed by (global seed, level, destination id), so the sampled
// neighbors of a node at a level never depend on which batch, kernel, thread
// or process performed the sampling.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fsample/graph.hpp"
#include "fsample/rng.hpp"

namespace fsample {

enum class ChooseMode {
  uniform,  ///< uniform without replacement
  first_k,  ///< deterministic prefix of the stored neighbor list, for tracing
};

struct SamplerRng {
  std::uint64_t global_seed = 0;
  ChooseMode mode = ChooseMode::uniform;

  RandomStream stream(std::uint32_t level, NodeId dst) const {
    return RandomStream(derive_key(global_seed, StreamDomain::neighbor_choice, level, dst));
  }
};

/// Per-level fanouts ordered top-down: fanouts()[0] is N_L, the last is N_1.
class FanoutPlan {
 public:
  explicit FanoutPlan(std::vector<std::uint32_t> fanouts);

  std::size_t num_levels() const { return fanouts_.size(); }
  std::span<const std::uint32_t> fanouts() const { return fanouts_; }
  /// Fanout of the block at position `index` (0 = top level).
  std::uint32_t at(std::size_t index) const { return fanouts_.at(index); }
  /// Level number l of the block at `index`: L for index 0 down to 1.
  std::uint32_t level_of(std::size_t index) const {
    return static_cast<std::uint32_t>(fanouts_.size() - index);
  }

 private:
  std::vector<std::uint32_t> fanouts_;
};

/// One bipartite layer: rows are destination locals (positions in
/// dst_globals), entries are source locals (positions in src_globals).
struct MfgBlock {
  std::vector<NodeId> dst_globals;
  std::vector<NodeId> src_globals;
  CscGraph block;

  bool operator==(const MfgBlock&) const = default;
};

struct MiniBatchSample {
  std::vector<MfgBlock> blocks;  ///< top level first
  std::vector<NodeId> input_nodes;
  bool include_dst = false;

  bool operator==(const MiniBatchSample&) const = default;
};

enum class Kernel { fused, two_step };

/// Instrumentation for the COO buffers the two-step path materializes.
struct KernelStats {
  std::uint64_t coo_buffer_allocations = 0;
  std::uint64_t coo_bytes = 0;
  std::uint64_t sampled_edges = 0;
};

/// Chooses min(k, |neighbors|) entries. Degree <= k returns every neighbor in
/// storage order; otherwise k distinct positions, uniformly without
/// replacement, in selection order (sparse partial Fisher-Yates).
std::vector<NodeId> choose(std::span<const NodeId> neighbors, std::size_t k, RandomStream& stream);

/// Allocation-free form used by the kernels; `out` must hold min(k, d) ids.
std::size_t choose_into(std::span<const NodeId> neighbors, std::size_t k, const SamplerRng& rng,
                        std::uint32_t level, NodeId dst, NodeId* out);

struct SampledEdge {
  NodeId src;
  NodeId dst;
  bool operator==(const SampledEdge&) const = default;
};

std::vector<SampledEdge> sample_edges(const CscGraph& g, NodeId v, std::size_t k,
                                      const SamplerRng& rng, std::uint32_t level);

/// Reusable per-worker buffers, including the dense node -> local-id map. The
/// map is invalidated between calls by bumping an epoch stamp, so resetting it
/// costs nothing. Not safe to share between concurrent calls.
class SamplerScratch {
 public:
  SamplerScratch() = default;

  /// Grows the map to cover `num_nodes` ids.
  void reserve_nodes(std::uint64_t num_nodes);

  /// Starts a new map generation.
  void next_epoch();
  bool mapped(NodeId v) const { return slots_[v].stamp == epoch_; }
  NodeId local(NodeId v) const { return slots_[v].local; }
  void assign(NodeId v, NodeId local) { slots_[v] = {epoch_, local}; }

  std::vector<NodeId>& sample_buffer() { return sampled_; }
  std::vector<std::uint64_t>& claim_buffer() { return claims_; }
  std::vector<NodeId>& local_buffer() { return locals_; }

 private:
  struct Slot {
    std::uint64_t stamp = 0;
    NodeId local = 0;
  };
  std::vector<Slot> slots_;
  std::uint64_t epoch_ = 0;
  std::vector<NodeId> sampled_;
  // Parallel compaction state: per-node first-claim position (all-ones when
  // free) and per-node local id.
  std::vector<std::uint64_t> claims_;
  std::vector<NodeId> locals_;
};

struct LevelOptions {
  bool include_dst = true;
  unsigned threads = 1;  ///< >1 parallelizes both loops; output is unchanged
};

/// Algorithm-style fused kernel. `seeds` must be unique.
MfgBlock fused_sample_level(const CscGraph& g, std::span<const NodeId> seeds, std::size_t k,
                            const SamplerRng& rng, std::uint32_t level, const LevelOptions& opts,
                            SamplerScratch& scratch);
MfgBlock fused_sample_level(const CscGraph& g, std::span<const NodeId> seeds, std::size_t k,
                            const SamplerRng& rng, std::uint32_t level, bool include_dst);

/// Conventional baseline: global COO sample, then relabel + COO -> CSC.
MfgBlock two_step_sample_level(const CscGraph& g, std::span<const NodeId> seeds, std::size_t k,
                               const SamplerRng& rng, std::uint32_t level, bool include_dst,
                               KernelStats* stats = nullptr);

/// Second loop of the fused kernel on already-sampled lists: row i of the
/// block holds samples[row_ptr[i] .. row_ptr[i+1]). Assigns source locals by
/// first occurrence (seeds first when include_dst).
MfgBlock compact_fused(std::span<const NodeId> seeds, std::span<const EdgeOffset> row_ptr,
                       std::span<const NodeId> samples, std::uint64_t num_nodes, bool include_dst,
                       SamplerScratch& scratch);

/// Second step of the two-step kernel on a global-id COO sample whose edges
/// are grouped by destination in seed order.
MfgBlock compact_two_step(std::span<const NodeId> seeds, std::span<const NodeId> coo_dst,
                          std::span<const NodeId> coo_src, bool include_dst,
                          KernelStats* stats = nullptr);

struct MinibatchOptions {
  Kernel kernel = Kernel::fused;
  bool include_dst = true;
  unsigned threads = 1;
};

/// L-level recursion: the sources sampled at one level seed the level below.
MiniBatchSample sample_minibatch(const CscGraph& g, std::span<const NodeId> batch,
                                 const FanoutPlan& plan, const SamplerRng& rng,
                                 const MinibatchOptions& opts, SamplerScratch& scratch,
                                 KernelStats* stats = nullptr);
MiniBatchSample sample_minibatch(const CscGraph& g, std::span<const NodeId> batch,
                                 const FanoutPlan& plan, const SamplerRng& rng,
                                 const MinibatchOptions& opts = {});

/// Random permutation of the labeled nodes cut into batches of `batch_size`;
/// the last batch may be short. Deterministic in (rng.global_seed, epoch).
std::vector<std::vector<NodeId>> seed_batches(const LabelSet& labels, std::size_t batch_size,
                                              const SamplerRng& rng, std::uint64_t epoch = 0);

/// Throws ContractViolation if `seeds` contains a repeated id or an id >= num_nodes.
void check_unique_seeds(std::span<const NodeId> seeds, std::uint64_t num_nodes,
                        SamplerScratch& scratch);

// Block files ("FSMB"): the compressed arrays of the block followed by the
// destination and source id sections. All integers are little-endian u64.

void write_block(std::ostream& out, const MfgBlock& block);
/// Throws FormatError subclasses on bad magic, version, truncation or an
/// inconsistent payload.
MfgBlock read_block(std::istream& in);
void write_block(const std::string& path, const MfgBlock& block);
MfgBlock read_block(const std::string& path);

}  // namespace fsample
