#pragma once

// Distributed minibatch generation on top of all-to-all collectives.
//
// full mode: every rank stores only its partition's topology. The top level
// is sampled locally; each level below costs a request round and a response
// round, and gathering input features costs two more: 2L rounds per minibatch.
//
// hybrid mode: the topology is replicated and only features are sharded, so
// sampling is local and the feature gather is the only communication: 2 rounds.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fsample/graph.hpp"
#include "fsample/partition.hpp"
#include "fsample/sampler.hpp"
#include "fsample/transport.hpp"

namespace fsample {

enum class DistMode { full, hybrid };

struct WorkerCtx {
  int rank = 0;
  int num_workers = 1;
  DistMode mode = DistMode::hybrid;
  std::shared_ptr<const CscGraph> graph;             ///< hybrid: replicated topology
  std::shared_ptr<const GraphPartition> partition;   ///< full: owned rows only
  std::shared_ptr<const FeatureShard> features;
  std::shared_ptr<const PartitionMap> pmap;
  LabelSet labels;  ///< labeled nodes owned by this rank
  SamplerRng rng;
  Kernel kernel = Kernel::fused;
  bool include_dst = true;
  std::unique_ptr<Communicator> comm;
  SamplerScratch scratch;

  RoundCounters& counters() { return comm->counters(); }
};

/// Everything needed to stand up one rank of a cluster from whole-graph inputs.
struct ClusterInputs {
  std::shared_ptr<const CscGraph> graph;
  std::shared_ptr<const FeatureMatrix> features;
  LabelSet labels;
  std::shared_ptr<const PartitionMap> pmap;
  DistMode mode = DistMode::hybrid;
  Kernel kernel = Kernel::fused;
  bool include_dst = true;
  SamplerRng rng;
};

/// Builds rank `rank`'s context: its shard, its labels, and (by mode) either
/// the full topology or its partition.
WorkerCtx make_worker(const ClusterInputs& inputs, int rank, std::unique_ptr<Transport> transport);

/// Top level sampled locally, then one request and one response round for
/// each of the L-1 lower levels. Batch nodes must be owned by this rank.
MiniBatchSample dist_sample_full(WorkerCtx& ctx, std::span<const NodeId> batch,
                                 const FanoutPlan& plan);

/// Local sampling over the replicated topology; no communication.
MiniBatchSample dist_sample_hybrid(WorkerCtx& ctx, std::span<const NodeId> batch,
                                   const FanoutPlan& plan);

/// Mode-dependent dispatch.
MiniBatchSample dist_sample(WorkerCtx& ctx, std::span<const NodeId> batch, const FanoutPlan& plan);

/// Two rounds: id lists to owners, feature rows back in request order. Rows
/// are aligned to `input_nodes`.
FeatureMatrix gather_features(WorkerCtx& ctx, std::span<const NodeId> input_nodes);

struct EpochMetrics {
  int rank = 0;
  std::size_t minibatches = 0;        ///< global step count (max over ranks)
  std::size_t local_minibatches = 0;  ///< steps that carried seeds on this rank
  std::vector<std::uint64_t> rounds_per_minibatch;
  std::uint64_t setup_rounds = 0;
  RoundCounters totals;  ///< summed over minibatches
  double epoch_seconds = 0.0;
};

/// Observer for each minibatch step. Called on the worker's own thread.
using MinibatchSink =
    std::function<void(int rank, std::size_t step, std::span<const NodeId> seeds,
                       const MiniBatchSample& sample, const FeatureMatrix& outputs)>;

/// One pass over the local labeled nodes. Ranks with fewer batches keep
/// joining collectives with empty seed sets until the global step count is
/// reached. Each step samples, gathers features and runs mean propagation.
EpochMetrics run_epoch(WorkerCtx& ctx, const FanoutPlan& plan, std::size_t batch_size,
                       std::uint64_t epoch = 0, const MinibatchSink& sink = {});

/// Runs `fn` on P in-process ranks, one thread each. If any rank throws, the
/// hub is aborted so peers unblock, and the first exception is rethrown.
void run_inproc_cluster(const ClusterInputs& inputs, int num_workers,
                        const std::function<void(WorkerCtx&)>& fn);

/// Convenience: one epoch on an in-process cluster; metrics indexed by rank.
std::vector<EpochMetrics> run_inproc_epoch(const ClusterInputs& inputs, int num_workers,
                                           const FanoutPlan& plan, std::size_t batch_size,
                                           std::uint64_t epoch = 0,
                                           const MinibatchSink& sink = {});

/// Serialization used to ship metrics to rank 0.
Bytes encode_metrics(const EpochMetrics& m);
EpochMetrics decode_metrics(std::span<const std::uint8_t> data);

}  // namespace fsample
