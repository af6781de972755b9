#include "fsample/dist.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "fsample/error.hpp"
#include "fsample/verify.hpp"

namespace fsample {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Bytes> empty_payloads(int n) { return std::vector<Bytes>(static_cast<std::size_t>(n)); }

// Builds a block from per-seed sampled lists with the configured kernel's
// assembly path.
MfgBlock assemble_block(WorkerCtx& ctx, std::span<const NodeId> seeds,
                        const std::vector<std::vector<NodeId>>& lists) {
  if (ctx.kernel == Kernel::fused) {
    std::vector<EdgeOffset> row_ptr(seeds.size() + 1, 0);
    for (std::size_t i = 0; i < seeds.size(); ++i) row_ptr[i + 1] = row_ptr[i] + lists[i].size();
    std::vector<NodeId> samples;
    samples.reserve(row_ptr.back());
    for (const auto& l : lists) samples.insert(samples.end(), l.begin(), l.end());
    return compact_fused(seeds, row_ptr, samples, ctx.pmap->num_nodes(), ctx.include_dst,
                         ctx.scratch);
  }
  std::vector<NodeId> coo_dst;
  std::vector<NodeId> coo_src;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (NodeId u : lists[i]) {
      coo_dst.push_back(seeds[i]);
      coo_src.push_back(u);
    }
  }
  return compact_two_step(seeds, coo_dst, coo_src, ctx.include_dst);
}

void sample_owned(const WorkerCtx& ctx, NodeId v, std::size_t k, std::uint32_t level,
                  std::vector<NodeId>& out) {
  const auto neighbors = ctx.partition->in_neighbors(v);
  out.resize(std::min(k, neighbors.size()));
  choose_into(neighbors, k, ctx.rng, level, v, out.data());
}

}  // namespace

WorkerCtx make_worker(const ClusterInputs& inputs, int rank, std::unique_ptr<Transport> transport) {
  if (!inputs.graph || !inputs.features || !inputs.pmap) {
    throw ParameterError("cluster inputs need a graph, features and a partition map");
  }
  if (inputs.pmap->num_nodes() != inputs.graph->num_nodes() ||
      inputs.features->num_nodes != inputs.graph->num_nodes()) {
    throw ParameterError("graph, features and partition map disagree on node count");
  }
  if (static_cast<int>(inputs.pmap->num_machines()) != transport->size()) {
    throw ParameterError("partition map has " + std::to_string(inputs.pmap->num_machines()) +
                         " machines but the cluster has " + std::to_string(transport->size()) +
                         " ranks");
  }
  WorkerCtx ctx;
  ctx.rank = rank;
  ctx.num_workers = transport->size();
  ctx.mode = inputs.mode;
  ctx.pmap = inputs.pmap;
  ctx.rng = inputs.rng;
  ctx.kernel = inputs.kernel;
  ctx.include_dst = inputs.include_dst;
  const auto machine = static_cast<MachineId>(rank);
  if (inputs.mode == DistMode::hybrid) {
    ctx.graph = inputs.graph;
  } else {
    ctx.partition = std::make_shared<const GraphPartition>(
        build_graph_partition(*inputs.graph, *inputs.pmap, machine));
  }
  ctx.features =
      std::make_shared<const FeatureShard>(build_feature_shard(*inputs.features, *inputs.pmap, machine));
  std::vector<NodeId> mine;
  for (NodeId v : inputs.labels.nodes()) {
    if (inputs.pmap->owner(v) == machine) mine.push_back(v);
  }
  ctx.labels = LabelSet(std::move(mine));
  ctx.comm = std::make_unique<Communicator>(std::move(transport));
  return ctx;
}

MiniBatchSample dist_sample_full(WorkerCtx& ctx, std::span<const NodeId> batch,
                                 const FanoutPlan& plan) {
  if (ctx.mode != DistMode::full || !ctx.partition) {
    throw ContractViolation("dist_sample_full needs a full-mode worker");
  }
  const int p = ctx.num_workers;
  MiniBatchSample out;
  out.include_dst = ctx.include_dst;
  std::vector<NodeId> seeds(batch.begin(), batch.end());

  for (std::size_t idx = 0; idx < plan.num_levels(); ++idx) {
    const std::uint32_t level = plan.level_of(idx);
    const std::size_t k = plan.at(idx);
    std::vector<std::vector<NodeId>> lists(seeds.size());

    if (idx == 0) {
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (seeds[i] >= ctx.pmap->num_nodes() ||
            ctx.pmap->owner(seeds[i]) != static_cast<MachineId>(ctx.rank)) {
          throw ContractViolation("batch node " + std::to_string(seeds[i]) +
                                  " is not owned by rank " + std::to_string(ctx.rank));
        }
        sample_owned(ctx, seeds[i], k, level, lists[i]);
      }
    } else {
      // Request round: (node, fanout) pairs to each owner.
      std::vector<Bytes> requests = empty_payloads(p);
      std::vector<std::vector<std::size_t>> positions(p);
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const MachineId owner = ctx.pmap->owner(seeds[i]);
        if (owner == static_cast<MachineId>(ctx.rank)) {
          sample_owned(ctx, seeds[i], k, level, lists[i]);
          continue;
        }
        ByteWriter w(requests[owner]);
        w.put<std::uint64_t>(seeds[i]);
        w.put<std::uint64_t>(k);
        positions[owner].push_back(i);
      }
      auto incoming = ctx.comm->all_to_all(std::move(requests), RoundTag::sample_request);

      // Serve peers with the same stream keys the requester would have used.
      std::vector<Bytes> responses = empty_payloads(p);
      std::vector<NodeId> picked;
      for (int j = 0; j < p; ++j) {
        if (incoming[j].size() % 16 != 0) {
          throw ProtocolError("sample request from rank " + std::to_string(j) + " is malformed");
        }
        ByteReader r(incoming[j]);
        ByteWriter w(responses[j]);
        while (r.remaining() > 0) {
          const auto node = r.get<std::uint64_t>();
          const auto fanout = r.get<std::uint64_t>();
          if (!ctx.partition->local_row(node)) {
            throw ProtocolError("rank " + std::to_string(j) + " asked rank " +
                                std::to_string(ctx.rank) + " for unowned node " +
                                std::to_string(node));
          }
          sample_owned(ctx, node, fanout, level, picked);
          w.put<std::uint64_t>(picked.size());
          w.put_array<std::uint64_t>(picked);
        }
      }
      auto answers = ctx.comm->all_to_all(std::move(responses), RoundTag::sample_response);

      for (int j = 0; j < p; ++j) {
        ByteReader r(answers[j]);
        for (std::size_t pos : positions[j]) {
          const auto len = r.get<std::uint64_t>();
          if (len > k) throw ProtocolError("sample response longer than the fanout");
          lists[pos] = r.get_vector<std::uint64_t>(len);
        }
        if (r.remaining() != 0) {
          throw ProtocolError("trailing bytes in sample response from rank " + std::to_string(j));
        }
      }
    }

    MfgBlock block = assemble_block(ctx, seeds, lists);
    seeds = block.src_globals;
    out.blocks.push_back(std::move(block));
  }
  out.input_nodes = std::move(seeds);
  return out;
}

MiniBatchSample dist_sample_hybrid(WorkerCtx& ctx, std::span<const NodeId> batch,
                                   const FanoutPlan& plan) {
  if (ctx.mode != DistMode::hybrid || !ctx.graph) {
    throw ContractViolation("dist_sample_hybrid needs a replicated topology");
  }
  MinibatchOptions opts;
  opts.kernel = ctx.kernel;
  opts.include_dst = ctx.include_dst;
  return sample_minibatch(*ctx.graph, batch, plan, ctx.rng, opts, ctx.scratch);
}

MiniBatchSample dist_sample(WorkerCtx& ctx, std::span<const NodeId> batch, const FanoutPlan& plan) {
  return ctx.mode == DistMode::full ? dist_sample_full(ctx, batch, plan)
                                    : dist_sample_hybrid(ctx, batch, plan);
}

FeatureMatrix gather_features(WorkerCtx& ctx, std::span<const NodeId> input_nodes) {
  const int p = ctx.num_workers;
  const FeatureShard& shard = *ctx.features;
  const std::uint32_t dim = shard.dim();
  FeatureMatrix out(input_nodes.size(), dim);

  std::vector<Bytes> requests = empty_payloads(p);
  std::vector<std::vector<std::size_t>> positions(p);
  for (std::size_t i = 0; i < input_nodes.size(); ++i) {
    const NodeId v = input_nodes[i];
    if (v >= ctx.pmap->num_nodes()) {
      throw ProtocolError("feature request for node " + std::to_string(v) + " outside the graph");
    }
    const MachineId owner = ctx.pmap->owner(v);
    if (owner == static_cast<MachineId>(ctx.rank)) {
      const auto row = shard.row(v);
      std::copy(row.begin(), row.end(), out.row(i).begin());
      continue;
    }
    ByteWriter(requests[owner]).put<std::uint64_t>(v);
    positions[owner].push_back(i);
  }
  auto incoming = ctx.comm->all_to_all(std::move(requests), RoundTag::feature_request);

  std::vector<Bytes> responses = empty_payloads(p);
  for (int j = 0; j < p; ++j) {
    if (incoming[j].size() % 8 != 0) {
      throw ProtocolError("feature request from rank " + std::to_string(j) + " is malformed");
    }
    ByteReader r(incoming[j]);
    const auto ids = r.get_vector<std::uint64_t>(incoming[j].size() / 8);
    ByteWriter w(responses[j]);
    responses[j].reserve(ids.size() * dim * sizeof(float));
    for (NodeId v : ids) w.put_array<float>(shard.row(v));
  }
  auto answers = ctx.comm->all_to_all(std::move(responses), RoundTag::feature_response);

  for (int j = 0; j < p; ++j) {
    const std::size_t expected = positions[j].size() * dim * sizeof(float);
    if (answers[j].size() != expected) {
      throw ProtocolError("feature response from rank " + std::to_string(j) + " has " +
                          std::to_string(answers[j].size()) + " bytes, expected " +
                          std::to_string(expected));
    }
    ByteReader r(answers[j]);
    for (std::size_t pos : positions[j]) r.get_array<float>(out.row(pos));
  }
  return out;
}

EpochMetrics run_epoch(WorkerCtx& ctx, const FanoutPlan& plan, std::size_t batch_size,
                       std::uint64_t epoch, const MinibatchSink& sink) {
  const auto epoch_start = Clock::now();
  EpochMetrics metrics;
  metrics.rank = ctx.rank;

  std::vector<std::vector<NodeId>> batches;
  if (!ctx.labels.empty()) batches = seed_batches(ctx.labels, batch_size, ctx.rng, epoch);
  metrics.local_minibatches = batches.size();

  // Agree on the global step count so every rank issues the same collectives.
  ctx.counters().reset();
  std::vector<Bytes> counts = empty_payloads(ctx.num_workers);
  for (auto& c : counts) ByteWriter(c).put<std::uint64_t>(batches.size());
  const auto all_counts = ctx.comm->all_to_all(std::move(counts), RoundTag::setup);
  metrics.setup_rounds = ctx.counters().comm_rounds;
  for (const auto& c : all_counts) {
    ByteReader r(c);
    metrics.minibatches = std::max<std::size_t>(metrics.minibatches, r.get<std::uint64_t>());
  }

  const std::vector<NodeId> no_seeds;
  for (std::size_t step = 0; step < metrics.minibatches; ++step) {
    ctx.counters().reset();
    const auto& seeds = step < batches.size() ? batches[step] : no_seeds;

    auto t = Clock::now();
    MiniBatchSample sample = dist_sample(ctx, seeds, plan);
    ctx.counters().sample_seconds = seconds_since(t);

    t = Clock::now();
    FeatureMatrix inputs = gather_features(ctx, sample.input_nodes);
    ctx.counters().gather_seconds = seconds_since(t);

    t = Clock::now();
    FeatureMatrix outputs = mean_propagate(sample, inputs);
    ctx.counters().compute_seconds = seconds_since(t);

    metrics.rounds_per_minibatch.push_back(ctx.counters().comm_rounds);
    metrics.totals += ctx.counters();
    if (sink) sink(ctx.rank, step, seeds, sample, outputs);
  }
  metrics.epoch_seconds = seconds_since(epoch_start);
  return metrics;
}

void run_inproc_cluster(const ClusterInputs& inputs, int num_workers,
                        const std::function<void(WorkerCtx&)>& fn) {
  auto hub = InProcHub::create(num_workers);
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> threads;
  threads.reserve(num_workers);
  for (int r = 0; r < num_workers; ++r) {
    threads.emplace_back([&, r] {
      try {
        WorkerCtx ctx = make_worker(inputs, r, hub->endpoint(r));
        fn(ctx);
      } catch (const std::exception& e) {
        {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
        hub->abort(r, e.what());
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<EpochMetrics> run_inproc_epoch(const ClusterInputs& inputs, int num_workers,
                                           const FanoutPlan& plan, std::size_t batch_size,
                                           std::uint64_t epoch, const MinibatchSink& sink) {
  std::vector<EpochMetrics> metrics(num_workers);
  run_inproc_cluster(inputs, num_workers, [&](WorkerCtx& ctx) {
    metrics[ctx.rank] = run_epoch(ctx, plan, batch_size, epoch, sink);
  });
  return metrics;
}

Bytes encode_metrics(const EpochMetrics& m) {
  Bytes out;
  ByteWriter w(out);
  w.put<std::int32_t>(m.rank);
  w.put<std::uint64_t>(m.minibatches);
  w.put<std::uint64_t>(m.local_minibatches);
  w.put<std::uint64_t>(m.setup_rounds);
  w.put<std::uint64_t>(m.rounds_per_minibatch.size());
  w.put_array<std::uint64_t>(m.rounds_per_minibatch);
  w.put<std::uint64_t>(m.totals.comm_rounds);
  w.put<std::uint64_t>(m.totals.bytes_sent);
  w.put<std::uint64_t>(m.totals.bytes_received);
  w.put<std::uint64_t>(m.totals.framing_bytes_sent);
  w.put<std::uint64_t>(m.totals.framing_bytes_received);
  w.put<double>(m.totals.sample_seconds);
  w.put<double>(m.totals.gather_seconds);
  w.put<double>(m.totals.compute_seconds);
  w.put<double>(m.epoch_seconds);
  return out;
}

EpochMetrics decode_metrics(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  EpochMetrics m;
  m.rank = r.get<std::int32_t>();
  m.minibatches = r.get<std::uint64_t>();
  m.local_minibatches = r.get<std::uint64_t>();
  m.setup_rounds = r.get<std::uint64_t>();
  m.rounds_per_minibatch = r.get_vector<std::uint64_t>(r.get<std::uint64_t>());
  m.totals.comm_rounds = r.get<std::uint64_t>();
  m.totals.bytes_sent = r.get<std::uint64_t>();
  m.totals.bytes_received = r.get<std::uint64_t>();
  m.totals.framing_bytes_sent = r.get<std::uint64_t>();
  m.totals.framing_bytes_received = r.get<std::uint64_t>();
  m.totals.sample_seconds = r.get<double>();
  m.totals.gather_seconds = r.get<double>();
  m.totals.compute_seconds = r.get<double>();
  m.epoch_seconds = r.get<double>();
  return m;
}

}  // namespace fsample
