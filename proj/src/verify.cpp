#include "fsample/verify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "fsample/error.hpp"

namespace fsample {

FeatureMatrix mean_propagate(const MiniBatchSample& sample, const FeatureMatrix& input_rows) {
  if (input_rows.num_nodes != sample.input_nodes.size()) {
    throw ParameterError("input rows (" + std::to_string(input_rows.num_nodes) +
                         ") do not match input nodes (" +
                         std::to_string(sample.input_nodes.size()) + ")");
  }
  const std::uint32_t dim = input_rows.dim;
  FeatureMatrix h = input_rows;
  std::vector<double> acc(dim);
  for (auto it = sample.blocks.rbegin(); it != sample.blocks.rend(); ++it) {
    const MfgBlock& b = *it;
    if (b.src_globals.size() != h.num_nodes) {
      throw ContractViolation("block sources do not match the layer below");
    }
    FeatureMatrix next(b.dst_globals.size(), dim);
    for (std::size_t i = 0; i < b.dst_globals.size(); ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      std::size_t count = 0;
      auto add_row = [&](std::size_t local) {
        const auto row = h.row(local);
        for (std::uint32_t d = 0; d < dim; ++d) acc[d] += static_cast<double>(row[d]);
        ++count;
      };
      // With include_dst the destination's own id is source local i.
      if (sample.include_dst) add_row(i);
      for (NodeId c : b.block.in_neighbors(i)) add_row(c);
      if (count == 0) continue;
      auto out = next.row(i);
      for (std::uint32_t d = 0; d < dim; ++d) {
        out[d] = static_cast<float>(acc[d] / static_cast<double>(count));
      }
    }
    h = std::move(next);
  }
  return h;
}

namespace {

std::string describe_block_diff(const MfgBlock& a, const MfgBlock& b) {
  if (a.dst_globals != b.dst_globals) return "destination lists differ";
  if (a.src_globals != b.src_globals) return "source lists differ";
  if (a.block.row_ptr().size() != b.block.row_ptr().size() ||
      !std::equal(a.block.row_ptr().begin(), a.block.row_ptr().end(), b.block.row_ptr().begin())) {
    return "row pointers differ";
  }
  return "column indices differ";
}

std::vector<NodeId> random_unique_batch(RandomStream& s, std::uint64_t n, std::size_t size) {
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), NodeId{0});
  for (std::size_t i = 0; i < size; ++i) {
    std::swap(perm[i], perm[i + s.below(n - i)]);
  }
  perm.resize(size);
  return perm;
}

bool bit_equal(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  }
  return true;
}

}  // namespace

KernelCheckReport check_kernel_equivalence(const KernelCheckOptions& opts) {
  if (opts.trials == 0) throw ParameterError("kernel check needs at least one trial");
  if (opts.min_nodes == 0 || opts.min_nodes > opts.max_nodes) {
    throw ParameterError("kernel check node range is empty");
  }
  if (opts.min_fanout == 0 || opts.min_fanout > opts.max_fanout) {
    throw ParameterError("kernel check fanout range is empty");
  }
  if (!(opts.max_density >= 0.0 && opts.max_density <= 1.0)) {
    throw ParameterError("kernel check density must lie in [0, 1]");
  }

  KernelCheckReport report;
  report.trials = opts.trials;
  SamplerScratch scratch;
  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    const std::uint64_t instance_seed =
        derive_key(opts.seed, StreamDomain::verification, trial);
    RandomStream s(instance_seed);
    const std::uint64_t n = opts.min_nodes + s.below(opts.max_nodes - opts.min_nodes + 1);
    const auto max_edges =
        static_cast<std::uint64_t>(std::floor(opts.max_density * static_cast<double>(n * n)));
    const std::uint64_t m = s.below(max_edges + 1);
    const CscGraph g = build_csc(generate_erdos_renyi(n, m, s.next()));

    const auto batch = random_unique_batch(s, n, 1 + s.below(n));
    const auto k = static_cast<std::size_t>(opts.min_fanout +
                                            s.below(opts.max_fanout - opts.min_fanout + 1));
    const bool include_dst = s.below(2) == 1;
    SamplerRng rng{s.next(), s.below(4) == 0 ? ChooseMode::first_k : ChooseMode::uniform};
    const auto level = static_cast<std::uint32_t>(1 + s.below(3));
    const unsigned threads = s.below(4) == 0 ? 3u : 1u;

    auto fail = [&](const std::string& what) {
      std::ostringstream msg;
      msg << what << " (n=" << n << ", nnz=" << g.nnz() << ", batch=" << batch.size()
          << ", k=" << k << ", include_dst=" << include_dst << ", threads=" << threads << ")";
      report.failures.push_back({trial, instance_seed, msg.str()});
    };

    try {
      const MfgBlock fused =
          fused_sample_level(g, batch, k, rng, level, LevelOptions{include_dst, threads}, scratch);
      KernelStats stats;
      const MfgBlock two = two_step_sample_level(g, batch, k, rng, level, include_dst, &stats);
      report.sampled_edges += fused.block.nnz();
      if (!(fused == two)) {
        fail("single level: " + describe_block_diff(fused, two));
        continue;
      }
      if (stats.sampled_edges != fused.block.nnz()) {
        fail("two-step edge count disagrees with the fused block");
        continue;
      }

      // Two-level recursion exercises the frontier hand-off as well.
      const FanoutPlan plan({static_cast<std::uint32_t>(k),
                             static_cast<std::uint32_t>(1 + s.below(opts.max_fanout))});
      MinibatchOptions mo;
      mo.include_dst = include_dst;
      mo.threads = threads;
      mo.kernel = Kernel::fused;
      const auto a = sample_minibatch(g, batch, plan, rng, mo, scratch);
      mo.kernel = Kernel::two_step;
      const auto b = sample_minibatch(g, batch, plan, rng, mo, scratch);
      if (!(a == b)) fail("two-level minibatch differs between kernels");
    } catch (const std::exception& e) {
      fail(std::string("exception: ") + e.what());
    }
  }
  return report;
}

void PerSeedView::add(const MiniBatchSample& sample, const FeatureMatrix& out) {
  const std::size_t num_levels = sample.blocks.size();
  for (std::size_t idx = 0; idx < num_levels; ++idx) {
    const MfgBlock& b = sample.blocks[idx];
    const auto level = static_cast<std::uint32_t>(num_levels - idx);
    for (std::size_t i = 0; i < b.dst_globals.size(); ++i) {
      std::vector<NodeId> srcs;
      for (NodeId c : b.block.in_neighbors(i)) srcs.push_back(b.src_globals[c]);
      const auto key = std::make_pair(level, b.dst_globals[i]);
      auto [it, inserted] = rows.emplace(key, srcs);
      if (!inserted && it->second != srcs && !conflict) {
        conflict = "level " + std::to_string(level) + " node " + std::to_string(key.second) +
                   " sampled differently in two minibatches";
      }
    }
  }
  if (sample.blocks.empty()) return;
  const auto& seeds = sample.blocks.front().dst_globals;
  if (out.num_nodes != seeds.size()) {
    throw ContractViolation("output rows do not match the minibatch seeds");
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto row = out.row(i);
    std::vector<float> value(row.begin(), row.end());
    auto [it, inserted] = outputs.emplace(seeds[i], value);
    if (!inserted && !bit_equal(it->second, value) && !conflict) {
      conflict = "seed " + std::to_string(seeds[i]) + " produced two different outputs";
    }
  }
}

std::optional<std::string> compare_views(const PerSeedView& a, const PerSeedView& b) {
  if (a.conflict) return "left view is inconsistent: " + *a.conflict;
  if (b.conflict) return "right view is inconsistent: " + *b.conflict;
  if (a.rows.size() != b.rows.size()) {
    return "sampled row counts differ: " + std::to_string(a.rows.size()) + " vs " +
           std::to_string(b.rows.size());
  }
  for (auto ia = a.rows.begin(), ib = b.rows.begin(); ia != a.rows.end(); ++ia, ++ib) {
    if (ia->first != ib->first) {
      return "sampled (level, node) sets differ at level " + std::to_string(ia->first.first) +
             " node " + std::to_string(ia->first.second);
    }
    if (ia->second != ib->second) {
      return "level " + std::to_string(ia->first.first) + " node " +
             std::to_string(ia->first.second) + " has different sampled sources";
    }
  }
  if (a.outputs.size() != b.outputs.size()) {
    return "output counts differ: " + std::to_string(a.outputs.size()) + " vs " +
           std::to_string(b.outputs.size());
  }
  for (auto ia = a.outputs.begin(), ib = b.outputs.begin(); ia != a.outputs.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return "seed sets differ at " + std::to_string(ia->first);
    if (!bit_equal(ia->second, ib->second)) {
      return "seed " + std::to_string(ia->first) + " has a different output row";
    }
  }
  return std::nullopt;
}

DistCheckReport check_dist_equivalence(const ClusterInputs& inputs, int num_workers,
                                       const FanoutPlan& plan, std::size_t batch_size,
                                       std::uint64_t epoch) {
  struct Record {
    std::vector<NodeId> seeds;
    MiniBatchSample sample;
    FeatureMatrix outputs;
  };
  std::mutex mutex;
  std::map<std::pair<int, std::size_t>, Record> records;
  const auto metrics = run_inproc_epoch(
      inputs, num_workers, plan, batch_size, epoch,
      [&](int rank, std::size_t step, std::span<const NodeId> seeds, const MiniBatchSample& sample,
          const FeatureMatrix& outputs) {
        std::lock_guard lock(mutex);
        records[{rank, step}] = Record{{seeds.begin(), seeds.end()}, sample, outputs};
      });

  DistCheckReport report;
  std::set<std::uint64_t> rounds;
  for (const auto& m : metrics) rounds.insert(m.rounds_per_minibatch.begin(), m.rounds_per_minibatch.end());
  report.rounds_per_minibatch.assign(rounds.begin(), rounds.end());

  auto mismatch = [&](std::string what) {
    if (report.mismatches.size() < 20) report.mismatches.push_back(std::move(what));
  };

  // Single-process oracle over the whole graph with the same per-rank batches.
  MinibatchOptions mo;
  mo.kernel = inputs.kernel;
  mo.include_dst = inputs.include_dst;
  for (int r = 0; r < num_workers; ++r) {
    std::vector<NodeId> owned;
    for (NodeId v : inputs.labels.nodes()) {
      if (inputs.pmap->owner(v) == static_cast<MachineId>(r)) owned.push_back(v);
    }
    const LabelSet mine(std::move(owned));
    const auto batches =
        mine.empty() ? std::vector<std::vector<NodeId>>{} : seed_batches(mine, batch_size, inputs.rng, epoch);
    for (std::size_t step = 0; step < batches.size(); ++step) {
      const std::string where = "rank " + std::to_string(r) + " step " + std::to_string(step);
      auto it = records.find({r, step});
      if (it == records.end()) {
        mismatch(where + ": no distributed minibatch");
        report.blocks_equal = false;
        continue;
      }
      const Record& got = it->second;
      if (got.seeds != batches[step]) {
        mismatch(where + ": seed batch differs");
        report.blocks_equal = false;
        continue;
      }
      const auto expect = sample_minibatch(*inputs.graph, batches[step], plan, inputs.rng, mo);
      if (!(expect == got.sample)) {
        report.blocks_equal = false;
        for (std::size_t b = 0; b < expect.blocks.size() && b < got.sample.blocks.size(); ++b) {
          if (!(expect.blocks[b] == got.sample.blocks[b])) {
            mismatch(where + " block " + std::to_string(b) + ": " +
                     describe_block_diff(expect.blocks[b], got.sample.blocks[b]));
            break;
          }
        }
      }
      FeatureMatrix in(expect.input_nodes.size(), inputs.features->dim);
      for (std::size_t i = 0; i < expect.input_nodes.size(); ++i) {
        const auto src = inputs.features->row(expect.input_nodes[i]);
        std::copy(src.begin(), src.end(), in.row(i).begin());
      }
      const FeatureMatrix want = mean_propagate(expect, in);
      if (want.data.size() != got.outputs.data.size()) {
        report.outputs_equal = false;
        mismatch(where + ": output shape differs");
      } else {
        for (std::size_t i = 0; i < want.data.size(); ++i) {
          report.max_abs_diff = std::max(
              report.max_abs_diff,
              std::abs(static_cast<double>(want.data[i]) - static_cast<double>(got.outputs.data[i])));
        }
        if (!bit_equal(want.data, got.outputs.data)) {
          report.outputs_equal = false;
          mismatch(where + ": outputs differ");
        }
      }
      ++report.minibatches_checked;
    }
  }

  for (const auto& [key, rec] : records) {
    if (rec.seeds.empty()) {
      if (!rec.sample.input_nodes.empty()) {
        report.blocks_equal = false;
        mismatch("rank " + std::to_string(key.first) + " step " + std::to_string(key.second) +
                 ": empty step produced inputs");
      }
      continue;
    }
    report.view.add(rec.sample, rec.outputs);
  }
  if (report.view.conflict) {
    report.blocks_equal = false;
    mismatch(*report.view.conflict);
  }
  return report;
}

}  // namespace fsample

namespace fsample {

SamplingCheckReport check_sampling_contract(const SamplingCheckOptions& opts) {
  SamplingCheckReport rep;
  auto fail = [&](std::string what) {
    if (rep.failures.size() < 20) rep.failures.push_back(std::move(what));
  };

  SamplerScratch scratch;
  for (std::size_t trial = 0; trial < opts.graphs; ++trial) {
    RandomStream s(derive_key(opts.seed, StreamDomain::verification, trial, 0x5A));
    const std::uint64_t n = 2 + s.below(400);
    const std::uint64_t max_edges = std::min<std::uint64_t>(n * n, n * 12);
    const CscGraph g = build_csc(generate_erdos_renyi(n, s.below(max_edges + 1), s.next()));
    std::vector<NodeId> batch;
    for (NodeId v = 0; v < n; ++v) {
      if (s.below(6) == 0) batch.push_back(v);
    }
    if (batch.empty()) batch.push_back(s.below(n));
    const FanoutPlan plan({static_cast<std::uint32_t>(1 + s.below(16)),
                           static_cast<std::uint32_t>(1 + s.below(16)),
                           static_cast<std::uint32_t>(1 + s.below(16))});
    MinibatchOptions mo;
    mo.include_dst = s.below(2) == 1;
    mo.kernel = s.below(2) == 1 ? Kernel::fused : Kernel::two_step;
    const auto mb = sample_minibatch(g, batch, plan, SamplerRng{s.next()}, mo, scratch);
    for (std::size_t idx = 0; idx < mb.blocks.size(); ++idx) {
      const MfgBlock& b = mb.blocks[idx];
      ++rep.blocks_checked;
      const std::string where = "graph " + std::to_string(trial) + " block " + std::to_string(idx);
      for (std::size_t i = 0; i < b.dst_globals.size(); ++i) {
        const NodeId dst = b.dst_globals[i];
        const auto row = b.block.in_neighbors(i);
        const auto parent = g.in_neighbors(dst);
        if (row.size() != std::min<std::size_t>(plan.at(idx), parent.size())) {
          fail(where + ": node " + std::to_string(dst) + " has " + std::to_string(row.size()) +
               " sampled in-edges");
        }
        for (NodeId c : row) {
          ++rep.edges_checked;
          if (std::find(parent.begin(), parent.end(), b.src_globals[c]) == parent.end()) {
            fail(where + ": sampled edge " + std::to_string(b.src_globals[c]) + " -> " +
                 std::to_string(dst) + " is not in the graph");
          }
        }
      }
    }
  }

  // Brute-force oracle: fraction of the 4-subsets of 8 neighbors that contain
  // a fixed neighbor.
  constexpr unsigned kDegree = 8;
  constexpr unsigned kFanout = 4;
  std::uint64_t subsets = 0;
  std::uint64_t containing = 0;
  for (unsigned mask = 0; mask < (1u << kDegree); ++mask) {
    if (std::popcount(mask) != static_cast<int>(kFanout)) continue;
    ++subsets;
    containing += mask & 1u;
  }
  rep.expected_inclusion = static_cast<double>(containing) / static_cast<double>(subsets);

  // Star graph: node 0 has in-neighbors 1..8.
  CooGraph star{kDegree + 1, {}, {}};
  for (NodeId u = 1; u <= kDegree; ++u) {
    star.dst.push_back(0);
    star.src.push_back(u);
  }
  const CscGraph sg = build_csc(star);
  std::vector<std::uint64_t> hits(kDegree + 1, 0);
  for (std::size_t t = 0; t < opts.inclusion_trials; ++t) {
    const SamplerRng rng{derive_key(opts.seed, StreamDomain::verification, t, 0x1C)};
    for (const SampledEdge& e : sample_edges(sg, 0, kFanout, rng, 1)) ++hits[e.src];
  }
  if (opts.inclusion_trials > 0) {
    const double trials = static_cast<double>(opts.inclusion_trials);
    const double p = rep.expected_inclusion;
    const double sigma = std::sqrt(trials * p * (1 - p));
    for (NodeId u = 1; u <= kDegree; ++u) {
      const double z = std::abs(static_cast<double>(hits[u]) - trials * p) / sigma;
      rep.max_z = std::max(rep.max_z, z);
      if (z > 5.0) {
        fail("neighbor " + std::to_string(u) + " included " + std::to_string(hits[u]) +
             " times, " + std::to_string(z) + " sigma from expectation");
      }
    }
  }
  return rep;
}

}  // namespace fsample
