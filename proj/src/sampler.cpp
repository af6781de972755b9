#include "fsample/sampler.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "fsample/error.hpp"

namespace fsample {

namespace {

constexpr std::uint64_t kUnclaimed = std::numeric_limits<std::uint64_t>::max();

// Partial Fisher-Yates over the virtual identity permutation of [0, d). Only
// swapped positions are stored, so the cost is O(k) regardless of degree.
template <typename Overrides>
void virtual_shuffle(std::span<const NodeId> neighbors, std::size_t k, RandomStream& stream,
                     Overrides& swapped, NodeId* out) {
  const std::uint64_t d = neighbors.size();
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t j = i + stream.below(d - i);
    const std::uint64_t at_j = swapped.get(j);
    const std::uint64_t at_i = swapped.get(i);
    out[i] = neighbors[at_j];
    swapped.set(j, at_i);
  }
}

struct SmallOverrides {
  std::array<std::pair<std::uint64_t, std::uint64_t>, 32> slots;
  std::size_t used = 0;

  std::uint64_t get(std::uint64_t pos) const {
    for (std::size_t s = 0; s < used; ++s) {
      if (slots[s].first == pos) return slots[s].second;
    }
    return pos;
  }
  void set(std::uint64_t pos, std::uint64_t value) {
    for (std::size_t s = 0; s < used; ++s) {
      if (slots[s].first == pos) {
        slots[s].second = value;
        return;
      }
    }
    slots[used++] = {pos, value};
  }
};

struct DenseOverrides {
  std::vector<std::uint64_t> perm;
  explicit DenseOverrides(std::uint64_t d) : perm(d) { std::iota(perm.begin(), perm.end(), 0); }
  std::uint64_t get(std::uint64_t pos) const { return perm[pos]; }
  void set(std::uint64_t pos, std::uint64_t value) { perm[pos] = value; }
};

std::size_t choose_uniform(std::span<const NodeId> neighbors, std::size_t k, RandomStream& stream,
                           NodeId* out) {
  const std::size_t d = neighbors.size();
  if (d <= k) {
    std::copy(neighbors.begin(), neighbors.end(), out);
    return d;
  }
  // Each step writes at most one new override, so k <= 32 fits the inline table.
  if (k <= 32) {
    SmallOverrides swapped;
    virtual_shuffle(neighbors, k, stream, swapped, out);
  } else {
    DenseOverrides swapped(d);
    virtual_shuffle(neighbors, k, stream, swapped, out);
  }
  return k;
}

template <typename Fn>
void parallel_for_chunks(unsigned threads, std::size_t n, Fn&& fn) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  if (chunks == 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(chunks - 1);
  const std::size_t step = (n + chunks - 1) / chunks;
  for (std::size_t c = 1; c < chunks; ++c) {
    const std::size_t begin = std::min(n, c * step);
    const std::size_t end = std::min(n, begin + step);
    pool.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
  }
  fn(std::size_t{0}, std::size_t{0}, std::min(n, step));
  for (auto& t : pool) t.join();
}

std::size_t chunk_count(unsigned threads, std::size_t n) {
  return std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
}

// Parallel form of the compaction loop. Positions index the virtual list
// [seeds (include_dst only)] ++ samples. Every node's first position is found
// with an atomic minimum; firsts are then numbered with a chunked prefix sum,
// which reproduces sequential first-occurrence numbering exactly.
MfgBlock compact_parallel(std::span<const NodeId> seeds, std::span<const EdgeOffset> row_ptr,
                          std::span<const NodeId> samples, std::uint64_t num_nodes,
                          bool include_dst, SamplerScratch& scratch, unsigned threads) {
  auto& claims = scratch.claim_buffer();
  auto& locals = scratch.local_buffer();
  if (claims.size() < num_nodes) claims.resize(num_nodes, kUnclaimed);
  if (locals.size() < num_nodes) locals.resize(num_nodes, 0);

  const std::size_t prefix = include_dst ? seeds.size() : 0;
  const std::size_t total = prefix + samples.size();
  auto node_at = [&](std::size_t p) { return p < prefix ? seeds[p] : samples[p - prefix]; };

  parallel_for_chunks(threads, total, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      std::atomic_ref<std::uint64_t> claim(claims[node_at(p)]);
      std::uint64_t seen = claim.load(std::memory_order_relaxed);
      while (p < seen && !claim.compare_exchange_weak(seen, p, std::memory_order_relaxed)) {
      }
    }
  });

  const std::size_t chunks = chunk_count(threads, total);
  std::vector<std::size_t> firsts(chunks, 0);
  parallel_for_chunks(threads, total, [&](std::size_t c, std::size_t begin, std::size_t end) {
    std::size_t count = 0;
    for (std::size_t p = begin; p < end; ++p) {
      count += claims[node_at(p)] == p;
    }
    firsts[c] = count;
  });
  std::vector<std::size_t> base(chunks, 0);
  std::exclusive_scan(firsts.begin(), firsts.end(), base.begin(), std::size_t{0});
  const std::size_t num_src = chunks == 0 ? 0 : base.back() + firsts.back();

  std::vector<NodeId> src_globals(num_src);
  parallel_for_chunks(threads, total, [&](std::size_t c, std::size_t begin, std::size_t end) {
    std::size_t next = base[c];
    for (std::size_t p = begin; p < end; ++p) {
      const NodeId v = node_at(p);
      if (claims[v] == p) {
        locals[v] = next;
        src_globals[next] = v;
        ++next;
      }
    }
  });

  std::vector<NodeId> col_idx(samples.size());
  parallel_for_chunks(threads, samples.size(), [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) col_idx[i] = locals[samples[i]];
  });
  // Return the claim table to all-unclaimed; racing stores write the same value.
  parallel_for_chunks(threads, total, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      std::atomic_ref<std::uint64_t>(claims[node_at(p)]).store(kUnclaimed, std::memory_order_relaxed);
    }
  });

  MfgBlock out;
  out.dst_globals.assign(seeds.begin(), seeds.end());
  out.block = CscGraph::from_trusted(seeds.size(), num_src,
                                     std::vector<EdgeOffset>(row_ptr.begin(), row_ptr.end()),
                                     std::move(col_idx));
  out.src_globals = std::move(src_globals);
  return out;
}

}  // namespace

FanoutPlan::FanoutPlan(std::vector<std::uint32_t> fanouts) : fanouts_(std::move(fanouts)) {
  if (fanouts_.empty()) {
    throw ParameterError("fanout plan needs at least one level");
  }
  for (auto f : fanouts_) {
    if (f < 1) throw ParameterError("every fanout must be at least 1");
  }
}

std::vector<NodeId> choose(std::span<const NodeId> neighbors, std::size_t k, RandomStream& stream) {
  std::vector<NodeId> out(std::min(k, neighbors.size()));
  choose_uniform(neighbors, k, stream, out.data());
  return out;
}

std::size_t choose_into(std::span<const NodeId> neighbors, std::size_t k, const SamplerRng& rng,
                        std::uint32_t level, NodeId dst, NodeId* out) {
  if (rng.mode == ChooseMode::first_k || neighbors.size() <= k) {
    const std::size_t n = std::min(k, neighbors.size());
    std::copy_n(neighbors.begin(), n, out);
    return n;
  }
  RandomStream stream = rng.stream(level, dst);
  return choose_uniform(neighbors, k, stream, out);
}

std::vector<SampledEdge> sample_edges(const CscGraph& g, NodeId v, std::size_t k,
                                      const SamplerRng& rng, std::uint32_t level) {
  const auto neighbors = g.in_neighbors(v);
  std::vector<NodeId> picked(std::min(k, neighbors.size()));
  choose_into(neighbors, k, rng, level, v, picked.data());
  std::vector<SampledEdge> out;
  out.reserve(picked.size());
  for (NodeId u : picked) out.push_back({u, v});
  return out;
}

void SamplerScratch::reserve_nodes(std::uint64_t num_nodes) {
  if (slots_.size() < num_nodes) slots_.resize(num_nodes);
}

void SamplerScratch::next_epoch() {
  ++epoch_;
  if (epoch_ == 0) {
    // Stamp counter wrapped: clear so stale stamps cannot alias.
    std::fill(slots_.begin(), slots_.end(), Slot{});
    epoch_ = 1;
  }
}

void check_unique_seeds(std::span<const NodeId> seeds, std::uint64_t num_nodes,
                        SamplerScratch& scratch) {
  scratch.reserve_nodes(num_nodes);
  scratch.next_epoch();
  for (NodeId v : seeds) {
    if (v >= num_nodes) {
      throw ContractViolation("seed " + std::to_string(v) + " out of range");
    }
    if (scratch.mapped(v)) {
      throw ContractViolation("duplicate seed " + std::to_string(v));
    }
    scratch.assign(v, 0);
  }
}

namespace {

// Loop 2 of the fused kernel: first-occurrence numbering through the dense map.
std::vector<NodeId> compact_sequential(std::span<const NodeId> seeds,
                                       std::span<const NodeId> samples, std::uint64_t num_nodes,
                                       bool include_dst, SamplerScratch& scratch,
                                       std::vector<NodeId>& src_globals) {
  scratch.reserve_nodes(num_nodes);
  scratch.next_epoch();
  NodeId next = 0;
  if (include_dst) {
    src_globals.reserve(seeds.size());
    for (NodeId v : seeds) {
      if (scratch.mapped(v)) throw ContractViolation("duplicate seed " + std::to_string(v));
      scratch.assign(v, next++);
      src_globals.push_back(v);
    }
  }
  std::vector<NodeId> col_idx(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const NodeId v = samples[i];
    if (!scratch.mapped(v)) {
      src_globals.push_back(v);
      scratch.assign(v, next++);
    }
    col_idx[i] = scratch.local(v);
  }
  return col_idx;
}

}  // namespace

MfgBlock compact_fused(std::span<const NodeId> seeds, std::span<const EdgeOffset> row_ptr,
                       std::span<const NodeId> samples, std::uint64_t num_nodes, bool include_dst,
                       SamplerScratch& scratch) {
  if (row_ptr.size() != seeds.size() + 1 || row_ptr.back() != samples.size()) {
    throw MalformedInputError("row pointer does not match seeds and samples");
  }
  MfgBlock out;
  out.dst_globals.assign(seeds.begin(), seeds.end());
  auto col_idx =
      compact_sequential(seeds, samples, num_nodes, include_dst, scratch, out.src_globals);
  out.block = CscGraph::from_trusted(seeds.size(), out.src_globals.size(),
                                     std::vector<EdgeOffset>(row_ptr.begin(), row_ptr.end()),
                                     std::move(col_idx));
  return out;
}

MfgBlock fused_sample_level(const CscGraph& g, std::span<const NodeId> seeds, std::size_t k,
                            const SamplerRng& rng, std::uint32_t level, const LevelOptions& opts,
                            SamplerScratch& scratch) {
  check_unique_seeds(seeds, g.num_nodes(), scratch);

  std::vector<EdgeOffset> row_ptr(seeds.size() + 1, 0);
  auto& sampled = scratch.sample_buffer();

  if (opts.threads <= 1) {
    // Loop 1: sample each seed straight into S, extending R as we go.
    sampled.resize(std::min<std::uint64_t>(seeds.size() * k, g.nnz()));
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const NodeId v = seeds[i];
      const std::size_t n =
          choose_into(g.in_neighbors_unchecked(v), k, rng, level, v, sampled.data() + row_ptr[i]);
      row_ptr[i + 1] = row_ptr[i] + n;
    }
    sampled.resize(row_ptr.back());
    MfgBlock out;
    out.dst_globals.assign(seeds.begin(), seeds.end());
    auto col_idx = compact_sequential(seeds, sampled, g.num_nodes(), opts.include_dst, scratch,
                                      out.src_globals);
    out.block = CscGraph::from_trusted(seeds.size(), out.src_globals.size(), std::move(row_ptr),
                                       std::move(col_idx));
    return out;
  }

  // Parallel loop 1: per-seed counts are min(k, degree), so offsets are known
  // up front and each seed writes its own slice.
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    row_ptr[i + 1] = row_ptr[i] + std::min<std::uint64_t>(k, g.in_degree(seeds[i]));
  }
  sampled.resize(row_ptr.back());
  parallel_for_chunks(opts.threads, seeds.size(),
                      [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i) {
                          const NodeId v = seeds[i];
                          choose_into(g.in_neighbors_unchecked(v), k, rng, level, v,
                                      sampled.data() + row_ptr[i]);
                        }
                      });
  return compact_parallel(seeds, row_ptr, sampled, g.num_nodes(), opts.include_dst, scratch,
                          opts.threads);
}

MfgBlock fused_sample_level(const CscGraph& g, std::span<const NodeId> seeds, std::size_t k,
                            const SamplerRng& rng, std::uint32_t level, bool include_dst) {
  SamplerScratch scratch;
  return fused_sample_level(g, seeds, k, rng, level, LevelOptions{include_dst, 1}, scratch);
}

MfgBlock compact_two_step(std::span<const NodeId> seeds, std::span<const NodeId> coo_dst,
                          std::span<const NodeId> coo_src, bool include_dst, KernelStats* stats) {
  if (coo_dst.size() != coo_src.size()) {
    throw MalformedInputError("COO sample arrays differ in length");
  }
  MfgBlock out;
  out.dst_globals.assign(seeds.begin(), seeds.end());

  // Relabel: destinations first, then sources in first-occurrence order.
  std::unordered_map<NodeId, NodeId> dst_map;
  dst_map.reserve(seeds.size());
  for (NodeId v : seeds) {
    if (!dst_map.emplace(v, dst_map.size()).second) {
      throw ContractViolation("duplicate seed " + std::to_string(v));
    }
  }
  std::unordered_map<NodeId, NodeId> src_map;
  src_map.reserve(coo_src.size() + (include_dst ? seeds.size() : 0));
  if (include_dst) {
    for (NodeId v : seeds) {
      src_map.emplace(v, out.src_globals.size());
      out.src_globals.push_back(v);
    }
  }
  std::vector<NodeId> local_dst(coo_dst.size());
  std::vector<NodeId> local_src(coo_src.size());
  for (std::size_t e = 0; e < coo_src.size(); ++e) {
    const auto [it, inserted] = src_map.try_emplace(coo_src[e], out.src_globals.size());
    if (inserted) out.src_globals.push_back(coo_src[e]);
    local_src[e] = it->second;
    local_dst[e] = dst_map.at(coo_dst[e]);
  }
  if (stats != nullptr) {
    stats->coo_buffer_allocations += 2;
    stats->coo_bytes += 2 * coo_src.size() * sizeof(NodeId);
  }

  // COO -> CSC: recount per-destination degrees, prefix-sum, stable scatter.
  std::vector<EdgeOffset> row_ptr(seeds.size() + 1, 0);
  for (NodeId d : local_dst) ++row_ptr[d + 1];
  for (std::size_t i = 0; i < seeds.size(); ++i) row_ptr[i + 1] += row_ptr[i];
  std::vector<NodeId> col_idx(local_src.size());
  std::vector<EdgeOffset> cursor(row_ptr.begin(), row_ptr.end() - 1);
  for (std::size_t e = 0; e < local_src.size(); ++e) {
    col_idx[cursor[local_dst[e]]++] = local_src[e];
  }
  out.block = CscGraph::from_trusted(seeds.size(), out.src_globals.size(), std::move(row_ptr),
                                     std::move(col_idx));
  return out;
}

MfgBlock two_step_sample_level(const CscGraph& g, std::span<const NodeId> seeds, std::size_t k,
                               const SamplerRng& rng, std::uint32_t level, bool include_dst,
                               KernelStats* stats) {
  // Step 1: sample into a global-id COO edge list.
  std::vector<NodeId> coo_dst;
  std::vector<NodeId> coo_src;
  std::vector<NodeId> picked;
  for (NodeId v : seeds) {
    const auto neighbors = g.in_neighbors(v);
    const std::size_t need = std::min(k, neighbors.size());
    if (picked.size() < need) picked.resize(need);
    const std::size_t n = choose_into(neighbors, k, rng, level, v, picked.data());
    for (std::size_t j = 0; j < n; ++j) {
      coo_dst.push_back(v);
      coo_src.push_back(picked[j]);
    }
  }
  if (stats != nullptr) {
    stats->coo_buffer_allocations += 2;
    stats->coo_bytes += 2 * coo_src.size() * sizeof(NodeId);
    stats->sampled_edges += coo_src.size();
  }
  // Step 2: compact and convert.
  return compact_two_step(seeds, coo_dst, coo_src, include_dst, stats);
}

MiniBatchSample sample_minibatch(const CscGraph& g, std::span<const NodeId> batch,
                                 const FanoutPlan& plan, const SamplerRng& rng,
                                 const MinibatchOptions& opts, SamplerScratch& scratch,
                                 KernelStats* stats) {
  MiniBatchSample out;
  out.include_dst = opts.include_dst;
  out.blocks.reserve(plan.num_levels());
  std::vector<NodeId> seeds(batch.begin(), batch.end());
  for (std::size_t idx = 0; idx < plan.num_levels(); ++idx) {
    const std::uint32_t level = plan.level_of(idx);
    const std::size_t k = plan.at(idx);
    MfgBlock block =
        opts.kernel == Kernel::fused
            ? fused_sample_level(g, seeds, k, rng, level,
                                 LevelOptions{opts.include_dst, opts.threads}, scratch)
            : two_step_sample_level(g, seeds, k, rng, level, opts.include_dst, stats);
    if (stats != nullptr && opts.kernel == Kernel::fused) {
      stats->sampled_edges += block.block.nnz();
    }
    seeds = block.src_globals;
    out.blocks.push_back(std::move(block));
  }
  out.input_nodes = std::move(seeds);
  return out;
}

MiniBatchSample sample_minibatch(const CscGraph& g, std::span<const NodeId> batch,
                                 const FanoutPlan& plan, const SamplerRng& rng,
                                 const MinibatchOptions& opts) {
  SamplerScratch scratch;
  return sample_minibatch(g, batch, plan, rng, opts, scratch);
}

std::vector<std::vector<NodeId>> seed_batches(const LabelSet& labels, std::size_t batch_size,
                                              const SamplerRng& rng, std::uint64_t epoch) {
  if (batch_size < 1) throw ParameterError("batch size must be at least 1");
  if (labels.empty()) throw ParameterError("cannot draw batches from an empty label set");

  std::vector<NodeId> order(labels.nodes().begin(), labels.nodes().end());
  RandomStream stream(derive_key(rng.global_seed, StreamDomain::seed_batches, epoch));
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[stream.below(i + 1)]);
  }
  std::vector<std::vector<NodeId>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace fsample
