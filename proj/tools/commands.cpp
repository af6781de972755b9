#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "fsample/dist.hpp"
#include "fsample/error.hpp"
#include "fsample/graph.hpp"
#include "fsample/partition.hpp"
#include "fsample/sampler.hpp"
#include "fsample/verify.hpp"
#include "json.hpp"
#include "metrics.hpp"

namespace fsample::cli {

namespace {

using Clock = std::chrono::steady_clock;

class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shared option groups and parsing helpers

struct Common {
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "csv";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app->add_option("--out", c.out, "Output path");
  app->add_option("--format", c.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
}

FanoutPlan parse_fanouts(const std::string& text) {
  std::vector<std::uint32_t> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::uint32_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw ParameterError("bad fanout list '" + text + "'");
    }
    values.push_back(v);
  }
  return FanoutPlan(std::move(values));
}

std::string fanouts_text(const FanoutPlan& plan) {
  std::string s;
  for (std::size_t i = 0; i < plan.num_levels(); ++i) {
    s += (i ? "," : "") + std::to_string(plan.at(i));
  }
  return s;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || v == 0) {
      throw ParameterError("bad size list '" + text + "'");
    }
    values.push_back(v);
  }
  if (values.empty()) throw ParameterError("empty size list");
  return values;
}

Kernel parse_kernel(const std::string& s) { return s == "two-step" ? Kernel::two_step : Kernel::fused; }
std::string kernel_name(Kernel k) { return k == Kernel::fused ? "fused" : "two-step"; }
DistMode parse_mode(const std::string& s) { return s == "full" ? DistMode::full : DistMode::hybrid; }
std::string mode_name(DistMode m) { return m == DistMode::full ? "full" : "hybrid"; }

const auto kOnOff = CLI::IsMember({"on", "off"});

// Accepts a binary graph file or an edge-list text file.
CscGraph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, "FSGR", 4) == 0) return read_graph(path);
  return build_csc(read_edgelist_text(path));
}

struct GraphSource {
  std::string path;
  unsigned rmat_scale = 0;
  std::uint64_t edge_factor = 16;
};

void add_graph_source(CLI::App* app, GraphSource& g) {
  auto* path = app->add_option("--graph", g.path, "Graph file (binary or edge-list text)");
  auto* scale = app->add_option("--rmat-scale", g.rmat_scale, "Generate an R-MAT graph in memory");
  path->excludes(scale);
  app->add_option("--edge-factor", g.edge_factor, "R-MAT edges per node")->capture_default_str();
}

CscGraph resolve_graph(const GraphSource& g, std::uint64_t seed) {
  if (!g.path.empty()) return load_graph(g.path);
  if (g.rmat_scale == 0) throw ParameterError("need --graph or --rmat-scale");
  return build_csc(generate_rmat(g.rmat_scale, g.edge_factor, {}, seed));
}

void emit_records(const Common& c, const std::vector<MetricsRecord>& rows, std::ostream& out) {
  auto write = [&](std::ostream& o) {
    if (c.format == "json") {
      write_json(o, rows);
    } else {
      write_csv(o, rows);
    }
  };
  if (c.out.empty()) {
    write(out);
    return;
  }
  std::ofstream file(c.out);
  if (!file) throw Error("cannot open " + c.out + " for writing");
  write(file);
  if (!file.flush()) throw Error("write to " + c.out + " failed");
  out << "wrote " << rows.size() << " records to " << c.out << '\n';
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  Common common;
  bool rmat = false;
  bool er = false;
  unsigned scale = 12;
  std::uint64_t edge_factor = 16;
  std::vector<double> probs{0.57, 0.19, 0.19, 0.05};
  std::uint64_t nodes = 0;
  std::uint64_t edges = 0;
  std::string from_edgelist;
  bool dedup = false;
  unsigned index_width = 8;
  std::uint32_t dim = 0;
  std::string features_out;
  double label_fraction = 0.1;
  std::string labels_out;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  if (a.common.out.empty()) throw ParameterError("generate needs --out");
  CooGraph coo;
  if (!a.from_edgelist.empty()) {
    coo = read_edgelist_text(a.from_edgelist, a.nodes);
  } else if (a.er) {
    if (a.nodes == 0) throw ParameterError("--er needs --nodes");
    coo = generate_erdos_renyi(a.nodes, a.edges, a.common.seed);
  } else {
    if (a.probs.size() != 4) throw ParameterError("--probs takes four values");
    coo = generate_rmat(a.scale, a.edge_factor, {a.probs[0], a.probs[1], a.probs[2], a.probs[3]},
                        a.common.seed);
  }
  const CscGraph g = build_csc(coo, a.dedup ? Dedup::remove : Dedup::keep);
  write_graph(a.common.out, g, a.index_width);
  out << "nodes=" << g.num_nodes() << " edges=" << g.nnz() << " graph=" << a.common.out << '\n';
  if (!a.features_out.empty()) {
    if (a.dim == 0) throw ParameterError("--features-out needs --dim");
    write_features(a.features_out, generate_features(g.num_nodes(), a.dim, a.common.seed + 1));
    out << "features=" << a.features_out << " dim=" << a.dim << '\n';
  }
  if (!a.labels_out.empty()) {
    const LabelSet labels = generate_labels(g.num_nodes(), a.label_fraction, a.common.seed + 2);
    write_labels(a.labels_out, labels);
    out << "labels=" << a.labels_out << " count=" << labels.size() << '\n';
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------
// features

struct FeaturesArgs {
  Common common;
  std::string graph;
  std::uint64_t nodes = 0;
  std::uint32_t dim = 128;
};

int cmd_features(const FeaturesArgs& a, std::ostream& out) {
  if (a.common.out.empty()) throw ParameterError("features needs --out");
  const std::uint64_t n = a.graph.empty() ? a.nodes : load_graph(a.graph).num_nodes();
  if (n == 0) throw ParameterError("features needs --graph or --nodes");
  write_features(a.common.out, generate_features(n, a.dim, a.common.seed));
  out << "nodes=" << n << " dim=" << a.dim << " features=" << a.common.out << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------
// partition

struct PartitionArgs {
  Common common;
  std::string graph;
  std::uint32_t workers = 2;
  std::string method = "greedy";
  std::string labels;
  double slack = 0.05;
  std::string map_in;
  std::string map_format = "binary";
  std::string features;
  std::string shard_dir;
};

int cmd_partition(const PartitionArgs& a, std::ostream& out) {
  const CscGraph g = load_graph(a.graph);
  LabelSet labels;
  if (!a.labels.empty()) labels = read_labels(a.labels, g.num_nodes());

  PartitionMap pmap;
  if (a.method == "hash") {
    pmap = partition_hash(g.num_nodes(), a.workers);
  } else if (a.method == "greedy") {
    if (a.labels.empty()) throw ParameterError("greedy partitioning needs --labels");
    pmap = partition_greedy(g, a.workers, labels, a.slack);
  } else {
    if (a.map_in.empty()) throw ParameterError("import needs --map-in");
    pmap = read_partition_map(a.map_in, g.num_nodes(), a.workers);
  }

  if (!a.common.out.empty()) {
    if (a.map_format == "text") {
      std::ofstream file(a.common.out);
      if (!file) throw Error("cannot open " + a.common.out + " for writing");
      write_partition_map_text(file, pmap);
    } else {
      write_partition_map(a.common.out, pmap);
    }
  }

  if (!a.shard_dir.empty()) {
    std::filesystem::create_directories(a.shard_dir);
    std::optional<FeatureMatrix> feats;
    if (!a.features.empty()) feats = read_features(a.features);
    for (MachineId m = 0; m < pmap.num_machines(); ++m) {
      const std::string base = a.shard_dir + "/part" + std::to_string(m);
      const GraphPartition part = build_graph_partition(g, pmap, m);
      write_labels(base + ".nodes", LabelSet(part.owned_nodes));
      CooGraph edges;
      edges.num_nodes = g.num_nodes();
      for (NodeId v : part.owned_nodes) {
        for (NodeId u : part.in_neighbors(v)) {
          edges.dst.push_back(v);
          edges.src.push_back(u);
        }
      }
      std::ofstream file(base + ".edges");
      if (!file) throw Error("cannot open " + base + ".edges for writing");
      write_edgelist_text(file, edges);
      if (feats) write_features(base + ".features", build_feature_shard(*feats, pmap, m).rows);
    }
  }

  const BalanceStats stats = balance_stats(g, pmap, labels);
  out << "method=" << a.method << " workers=" << pmap.num_machines()
      << " edge_cut=" << edge_cut(g, pmap) << " edges=" << g.nnz() << '\n';
  for (MachineId m = 0; m < pmap.num_machines(); ++m) {
    out << "machine=" << m << " nodes=" << stats.nodes[m] << " labeled=" << stats.labeled[m]
        << " in_edges=" << stats.in_edges[m] << '\n';
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  Common common;
  std::string graph;
  std::string preset;
  std::uint64_t nodes = 0;
  std::uint64_t nnz = 0;
  std::uint64_t dim = 0;
  std::string dtype = "f32";
  unsigned index_width = 4;
};

struct StorageConfig {
  std::string name;
  std::uint64_t nodes;
  std::uint64_t nnz;
  std::uint64_t dim;
};

// Public dataset sizes: node count, edge count and input feature width.
const std::vector<StorageConfig> kPresets = {
    {"ogbn-products", 2500000, 124000000, 100},
    {"ogbn-papers100M", 111000000, 3200000000ULL, 128},
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  static const std::map<std::string, std::uint64_t> kDtypeBytes = {
      {"f16", 2}, {"bf16", 2}, {"f32", 4}, {"f64", 8}, {"i8", 1}};
  const std::uint64_t elem = kDtypeBytes.at(a.dtype);

  std::vector<StorageConfig> configs;
  if (!a.preset.empty()) {
    for (const auto& p : kPresets) {
      if (a.preset == "all" || a.preset == p.name) configs.push_back(p);
    }
    if (a.dim != 0) {
      for (auto& c : configs) c.dim = a.dim;
    }
  } else if (!a.graph.empty()) {
    const CscGraph g = load_graph(a.graph);
    configs.push_back({a.graph, g.num_nodes(), g.nnz(), a.dim});
  } else {
    if (a.nodes == 0) throw ParameterError("report needs --graph, --preset or --nodes");
    configs.push_back({"custom", a.nodes, a.nnz, a.dim});
  }

  nlohmann::json summary = nlohmann::json::array();
  for (const auto& c : configs) {
    const StorageReport r = storage_report(c.nodes, c.nnz, c.dim, elem, a.index_width);
    out << "config=" << c.name << " nodes=" << c.nodes << " nnz=" << c.nnz << " dim=" << c.dim
        << " topology_bytes=" << r.topology_bytes << " feature_bytes=" << r.feature_bytes
        << " topology_fraction=" << std::setprecision(6) << r.topology_fraction << '\n';
    summary.push_back({{"config", c.name},
                       {"nodes", c.nodes},
                       {"nnz", c.nnz},
                       {"dim", c.dim},
                       {"dtype_bytes", elem},
                       {"index_width", a.index_width},
                       {"topology_bytes", r.topology_bytes},
                       {"feature_bytes", r.feature_bytes},
                       {"topology_fraction", r.topology_fraction}});
  }
  if (!a.common.out.empty()) {
    std::ofstream file(a.common.out);
    if (!file) throw Error("cannot open " + a.common.out + " for writing");
    if (a.common.format == "json") {
      file << summary.dump(2) << '\n';
    } else {
      file << "config,nodes,nnz,dim,dtype_bytes,index_width,topology_bytes,feature_bytes,"
              "topology_fraction\n";
      for (const auto& s : summary) {
        char frac[32];
        std::snprintf(frac, sizeof(frac), "%.17g", s["topology_fraction"].get<double>());
        file << s["config"].get<std::string>() << ',' << s["nodes"] << ',' << s["nnz"] << ','
             << s["dim"] << ',' << s["dtype_bytes"] << ',' << s["index_width"] << ','
             << s["topology_bytes"] << ',' << s["feature_bytes"] << ',' << frac << '\n';
      }
    }
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------
// sample-bench

struct SampleBenchArgs {
  Common common;
  GraphSource graph;
  std::string fanouts = "15,10,5";
  std::string batch_sizes = "1024,2048,3072,4096,5120,6144,7168,8192,9216,10240";
  std::string kernel = "both";
  std::size_t reps = 5;
  std::size_t warmup = 2;
  std::string include_dst = "on";
  unsigned threads = 1;
};

int cmd_sample_bench(const SampleBenchArgs& a, std::ostream& out) {
  if (a.reps < 5) throw ParameterError("--reps must be at least 5");
  if (a.warmup < 2) throw ParameterError("--warmup must be at least 2");
  if (a.threads < 1) throw ParameterError("--threads must be at least 1");
  const FanoutPlan plan = parse_fanouts(a.fanouts);
  const auto sizes = parse_size_list(a.batch_sizes);
  const CscGraph g = resolve_graph(a.graph, a.common.seed);
  std::vector<NodeId> all(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) all[v] = v;
  const LabelSet everyone(std::move(all));
  const SamplerRng rng{a.common.seed};

  std::vector<Kernel> kernels;
  if (a.kernel != "two-step") kernels.push_back(Kernel::fused);
  if (a.kernel != "fused") kernels.push_back(Kernel::two_step);

  std::vector<MetricsRecord> rows;
  SamplerScratch scratch;
  for (std::size_t point = 0; point < sizes.size(); ++point) {
    const auto seeds = seed_batches(everyone, sizes[point], rng, point).front();
    std::map<Kernel, MiniBatchSample> reference;
    std::map<Kernel, double> medians;
    for (Kernel k : kernels) {
      MinibatchOptions opts;
      opts.kernel = k;
      opts.include_dst = a.include_dst == "on";
      opts.threads = a.threads;
      KernelStats stats;
      reference[k] = sample_minibatch(g, seeds, plan, rng, opts, scratch, &stats);
      for (std::size_t w = 0; w < a.warmup; ++w) sample_minibatch(g, seeds, plan, rng, opts, scratch);
      std::vector<double> times;
      for (std::size_t r = 0; r < a.reps; ++r) {
        const auto t0 = Clock::now();
        const auto mb = sample_minibatch(g, seeds, plan, rng, opts, scratch);
        times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
        if (mb.input_nodes.size() != reference[k].input_nodes.size()) {
          throw VerificationFailure("repeated sampling is not deterministic");
        }
      }
      medians[k] = median(times);
      MetricsRecord rec;
      rec.command = "sample-bench";
      rec.kernel = kernel_name(k);
      rec.mode = "single";
      rec.fanouts = fanouts_text(plan);
      rec.batch_size = seeds.size();
      rec.minibatches = a.reps;
      rec.sample_seconds = medians[k];
      double sum = 0.0;
      for (double t : times) sum += t;
      rec.total_seconds = sum;
      rec.sampled_edges = stats.sampled_edges;
      rec.coo_buffer_allocations = stats.coo_buffer_allocations;
      rows.push_back(rec);
    }
    if (reference.size() == 2) {
      if (!(reference[Kernel::fused] == reference[Kernel::two_step])) {
        throw VerificationFailure("kernels disagree at batch size " + std::to_string(sizes[point]));
      }
      rows[rows.size() - 2].speedup = medians[Kernel::two_step] / medians[Kernel::fused];
      std::ostringstream line;
      line << "batch=" << seeds.size() << " fanouts=" << fanouts_text(plan)
           << " fused_s=" << medians[Kernel::fused] << " two_step_s=" << medians[Kernel::two_step]
           << " speedup=" << rows[rows.size() - 2].speedup
           << " fused_coo_buffers=" << rows[rows.size() - 2].coo_buffer_allocations;
      (a.common.out.empty() ? std::cerr : out) << line.str() << '\n';
    }
  }
  emit_records(a.common, rows, out);
  return kSuccess;
}

// ---------------------------------------------------------------------------
// dist-bench

struct DistArgs {
  Common common;
  GraphSource graph;
  std::string features;
  std::uint32_t dim = 128;
  std::string labels;
  double label_fraction = 0.1;
  int workers = 2;
  std::string mode = "hybrid";
  std::string kernel = "fused";
  std::string fanouts = "15,10,5";
  std::size_t batch_size = 1000;
  std::string include_dst = "on";
  std::string transport = "inproc";
  int rank = 0;
  std::string peers;
  std::string partition_method = "greedy";
  std::string partition_map;
  bool scenarios = false;
  std::uint64_t epoch = 0;
  double timeout_s = 120;
};

ClusterInputs load_cluster_inputs(const DistArgs& a) {
  ClusterInputs in;
  auto g = std::make_shared<const CscGraph>(resolve_graph(a.graph, a.common.seed));
  in.graph = g;
  in.features = std::make_shared<const FeatureMatrix>(
      a.features.empty() ? generate_features(g->num_nodes(), a.dim, a.common.seed + 1)
                         : read_features(a.features));
  in.labels = a.labels.empty() ? generate_labels(g->num_nodes(), a.label_fraction, a.common.seed + 2)
                               : read_labels(a.labels, g->num_nodes());
  if (in.labels.empty()) throw ParameterError("no labeled nodes to train on");
  const auto p = static_cast<std::uint32_t>(a.workers);
  if (!a.partition_map.empty()) {
    in.pmap = std::make_shared<const PartitionMap>(read_partition_map(a.partition_map, g->num_nodes(), p));
    if (in.pmap->num_machines() != p) throw FormatError("partition map machine count differs from --workers");
  } else if (a.partition_method == "hash") {
    in.pmap = std::make_shared<const PartitionMap>(partition_hash(g->num_nodes(), p));
  } else {
    in.pmap = std::make_shared<const PartitionMap>(partition_greedy(*g, p, in.labels));
  }
  in.mode = parse_mode(a.mode);
  in.kernel = parse_kernel(a.kernel);
  in.include_dst = a.include_dst == "on";
  in.rng = SamplerRng{a.common.seed};
  return in;
}

MetricsRecord rank_record(const ClusterInputs& in, const DistArgs& a, const FanoutPlan& plan,
                          const EpochMetrics& m) {
  MetricsRecord r;
  r.command = "dist-bench";
  r.kernel = kernel_name(in.kernel);
  r.mode = mode_name(in.mode);
  r.fanouts = fanouts_text(plan);
  r.batch_size = a.batch_size;
  r.workers = a.workers;
  r.rank = m.rank;
  r.minibatches = m.minibatches;
  r.sample_seconds = m.totals.sample_seconds;
  r.gather_seconds = m.totals.gather_seconds;
  r.compute_seconds = m.totals.compute_seconds;
  r.total_seconds = m.epoch_seconds;
  r.comm_rounds = m.totals.comm_rounds;
  r.rounds_per_minibatch =
      m.rounds_per_minibatch.empty()
          ? 0
          : *std::max_element(m.rounds_per_minibatch.begin(), m.rounds_per_minibatch.end());
  r.bytes_sent = m.totals.bytes_sent;
  r.bytes_received = m.totals.bytes_received;
  return r;
}

MetricsRecord aggregate(const std::vector<MetricsRecord>& ranks) {
  MetricsRecord agg = ranks.front();
  agg.rank = -1;
  agg.sample_seconds = agg.gather_seconds = agg.compute_seconds = agg.total_seconds = 0.0;
  agg.comm_rounds = agg.bytes_sent = agg.bytes_received = 0;
  for (const auto& r : ranks) {
    agg.sample_seconds = std::max(agg.sample_seconds, r.sample_seconds);
    agg.gather_seconds = std::max(agg.gather_seconds, r.gather_seconds);
    agg.compute_seconds = std::max(agg.compute_seconds, r.compute_seconds);
    agg.total_seconds = std::max(agg.total_seconds, r.total_seconds);
    agg.comm_rounds = std::max(agg.comm_rounds, r.comm_rounds);
    agg.rounds_per_minibatch = std::max(agg.rounds_per_minibatch, r.rounds_per_minibatch);
    agg.bytes_sent += r.bytes_sent;
    agg.bytes_received += r.bytes_received;
  }
  return agg;
}

void print_summary(std::ostream& out, const MetricsRecord& agg, const std::vector<EpochMetrics>& ms) {
  bool uniform = true;
  for (const auto& m : ms) {
    for (std::uint64_t r : m.rounds_per_minibatch) uniform = uniform && r == agg.rounds_per_minibatch;
  }
  out << "mode=" << agg.mode << " kernel=" << agg.kernel << " workers=" << agg.workers
      << " minibatches=" << agg.minibatches << " rounds_per_minibatch=" << agg.rounds_per_minibatch
      << (uniform ? "" : " (varies)") << " epoch_seconds=" << agg.total_seconds
      << " sample_seconds=" << agg.sample_seconds << " gather_seconds=" << agg.gather_seconds
      << " bytes_sent=" << agg.bytes_sent << '\n';
}

int cmd_dist_bench(const DistArgs& a, std::ostream& out) {
  if (a.workers < 1) throw ParameterError("--workers must be at least 1");
  if (a.batch_size < 1) throw ParameterError("--batch-size must be at least 1");
  const FanoutPlan plan = parse_fanouts(a.fanouts);
  ClusterInputs inputs = load_cluster_inputs(a);
  std::vector<MetricsRecord> rows;

  if (a.transport == "tcp") {
    if (a.scenarios) throw ParameterError("--scenarios runs in-process only");
    const auto peers = parse_peer_list(a.peers);
    if (static_cast<int>(peers.size()) != a.workers) {
      throw ParameterError("--peers lists " + std::to_string(peers.size()) + " addresses for " +
                           std::to_string(a.workers) + " workers");
    }
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout_s * 1000));
    WorkerCtx ctx = make_worker(inputs, a.rank, TcpTransport::connect(a.rank, peers, timeout));
    const EpochMetrics m = run_epoch(ctx, plan, a.batch_size, a.epoch);
    std::vector<Bytes> report(a.workers);
    report[0] = encode_metrics(m);
    const auto gathered = ctx.comm->all_to_all(std::move(report), RoundTag::report);
    if (a.rank != 0) {
      const MetricsRecord mine = rank_record(inputs, a, plan, m);
      out << "rank=" << a.rank << " rounds_per_minibatch=" << mine.rounds_per_minibatch
          << " epoch_seconds=" << mine.total_seconds << '\n';
      return kSuccess;
    }
    std::vector<EpochMetrics> all;
    for (const auto& b : gathered) all.push_back(decode_metrics(b));
    for (const auto& em : all) rows.push_back(rank_record(inputs, a, plan, em));
    rows.push_back(aggregate(rows));
    print_summary(a.common.out.empty() ? std::cerr : out, rows.back(), all);
    emit_records(a.common, rows, out);
    return kSuccess;
  }

  std::vector<std::pair<DistMode, Kernel>> runs;
  if (a.scenarios) {
    runs = {{DistMode::full, Kernel::two_step},
            {DistMode::hybrid, Kernel::two_step},
            {DistMode::hybrid, Kernel::fused}};
  } else {
    runs = {{inputs.mode, inputs.kernel}};
  }
  double baseline = 0.0;
  for (const auto& [mode, kernel] : runs) {
    inputs.mode = mode;
    inputs.kernel = kernel;
    const auto metrics = run_inproc_epoch(inputs, a.workers, plan, a.batch_size, a.epoch);
    std::vector<MetricsRecord> per_rank;
    for (const auto& m : metrics) per_rank.push_back(rank_record(inputs, a, plan, m));
    MetricsRecord agg = aggregate(per_rank);
    if (baseline == 0.0) baseline = agg.total_seconds;
    agg.speedup = agg.total_seconds > 0.0 ? baseline / agg.total_seconds : 1.0;
    print_summary(a.common.out.empty() ? std::cerr : out, agg, metrics);
    rows.insert(rows.end(), per_rank.begin(), per_rank.end());
    rows.push_back(agg);
  }
  emit_records(a.common, rows, out);
  return kSuccess;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  Common common;
  std::string suite;
  std::size_t trials = 200;
  std::size_t instances = 100;
  int workers = 4;
  std::string mode = "hybrid";
  std::string kernel = "fused";
  std::string fanouts = "15,10,5";
  std::size_t batch_size = 64;
  std::uint64_t nodes = 2000;
  std::string include_dst = "on";
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  if (a.suite == "kernel") {
    KernelCheckOptions opts;
    opts.trials = a.trials;
    opts.seed = a.common.seed;
    const auto t0 = Clock::now();
    const KernelCheckReport rep = check_kernel_equivalence(opts);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    out << "suite=kernel trials=" << rep.trials << " sampled_edges=" << rep.sampled_edges
        << " failures=" << rep.failures.size() << " seconds=" << secs << '\n';
    for (const auto& f : rep.failures) {
      out << "  trial " << f.trial << " (seed " << f.instance_seed << "): " << f.message << '\n';
    }
    return rep.passed() ? kSuccess : kVerificationFailure;
  }
  if (a.suite == "formats") {
    const FormatCheckReport rep = check_format_round_trips(a.instances, a.common.seed);
    out << "suite=formats instances=" << rep.instances << " checks=" << rep.checks
        << " failures=" << rep.failures.size() << '\n';
    for (const auto& f : rep.failures) out << "  " << f << '\n';
    return rep.passed() ? kSuccess : kVerificationFailure;
  }
  if (a.suite == "sampling") {
    SamplingCheckOptions opts;
    opts.graphs = a.trials;
    opts.seed = a.common.seed;
    const SamplingCheckReport rep = check_sampling_contract(opts);
    out << "suite=sampling blocks=" << rep.blocks_checked << " edges=" << rep.edges_checked
        << " expected_inclusion=" << rep.expected_inclusion << " max_z=" << rep.max_z
        << " failures=" << rep.failures.size() << '\n';
    for (const auto& f : rep.failures) out << "  " << f << '\n';
    return rep.passed() ? kSuccess : kVerificationFailure;
  }

  // dist: one cluster against the single-process pipeline.
  if (a.workers < 1) throw ParameterError("--workers must be at least 1");
  const FanoutPlan plan = parse_fanouts(a.fanouts);
  ClusterInputs in;
  auto g = std::make_shared<const CscGraph>(
      build_csc(generate_erdos_renyi(a.nodes, std::min(a.nodes * a.nodes, a.nodes * 10), a.common.seed)));
  in.graph = g;
  in.features = std::make_shared<const FeatureMatrix>(generate_features(a.nodes, 16, a.common.seed + 1));
  in.labels = generate_labels(a.nodes, 0.2, a.common.seed + 2);
  in.pmap = std::make_shared<const PartitionMap>(
      partition_greedy(*g, static_cast<std::uint32_t>(a.workers), in.labels));
  in.mode = parse_mode(a.mode);
  in.kernel = parse_kernel(a.kernel);
  in.include_dst = a.include_dst == "on";
  in.rng = SamplerRng{a.common.seed};
  const DistCheckReport rep = check_dist_equivalence(in, a.workers, plan, a.batch_size);
  out << "suite=dist mode=" << a.mode << " workers=" << a.workers
      << " minibatches=" << rep.minibatches_checked << " blocks_equal=" << rep.blocks_equal
      << " outputs_equal=" << rep.outputs_equal << " max_abs_diff=" << rep.max_abs_diff
      << " rounds_per_minibatch=";
  for (std::size_t i = 0; i < rep.rounds_per_minibatch.size(); ++i) {
    out << (i ? "/" : "") << rep.rounds_per_minibatch[i];
  }
  out << '\n';
  for (const auto& m : rep.mismatches) out << "  " << m << '\n';
  const std::uint64_t expected = in.mode == DistMode::full ? 2 * plan.num_levels() : 2;
  bool rounds_ok = !rep.rounds_per_minibatch.empty();
  for (std::uint64_t r : rep.rounds_per_minibatch) rounds_ok = rounds_ok && r == expected;
  if (!rounds_ok) out << "  rounds per minibatch differ from " << expected << '\n';
  return rep.passed() && rounds_ok ? kSuccess : kVerificationFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph sampling engine and distributed minibatch runtime", "fsample"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic graph, optionally with features and labels");
  add_common(g, gen.common);
  auto* rmat_flag = g->add_flag("--rmat", gen.rmat, "R-MAT generator (default)");
  auto* er_flag = g->add_flag("--er", gen.er, "Uniform random graph with exactly --edges edges");
  rmat_flag->excludes(er_flag);
  g->add_option("--scale", gen.scale, "R-MAT log2 node count")->capture_default_str();
  g->add_option("--edge-factor", gen.edge_factor, "R-MAT edges per node")->capture_default_str();
  g->add_option("--probs", gen.probs, "R-MAT quadrant probabilities a b c d")->expected(4)->delimiter(',');
  g->add_option("--nodes", gen.nodes, "Node count (--er, or for --from-edgelist)");
  g->add_option("--edges", gen.edges, "Edge count for --er");
  g->add_option("--from-edgelist", gen.from_edgelist, "Convert a 'src dst' text edge list");
  g->add_flag("--dedup", gen.dedup, "Drop repeated edges");
  g->add_option("--index-width", gen.index_width, "Bytes per stored index")
      ->check(CLI::IsMember({4u, 8u}))
      ->capture_default_str();
  g->add_option("--dim", gen.dim, "Feature width for --features-out");
  g->add_option("--features-out", gen.features_out, "Also write random features here");
  g->add_option("--label-fraction", gen.label_fraction, "Labeled fraction for --labels-out")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  g->add_option("--labels-out", gen.labels_out, "Also write a random label set here");

  FeaturesArgs feat;
  auto* f = app.add_subcommand("features", "Write a random feature matrix");
  add_common(f, feat.common);
  f->add_option("--graph", feat.graph, "Take the node count from this graph");
  f->add_option("--nodes", feat.nodes, "Node count");
  f->add_option("--dim", feat.dim, "Feature width")->capture_default_str();

  PartitionArgs part;
  auto* p = app.add_subcommand("partition", "Assign nodes to machines and report the edge cut");
  add_common(p, part.common);
  p->add_option("--graph", part.graph, "Graph file")->required();
  p->add_option("--workers,-P", part.workers, "Number of machines")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  p->add_option("--method", part.method, "Partitioner")
      ->check(CLI::IsMember({"hash", "greedy", "import"}))
      ->capture_default_str();
  p->add_option("--labels", part.labels, "Label file (required by greedy)");
  p->add_option("--slack", part.slack, "Greedy capacity slack")->capture_default_str();
  p->add_option("--map-in", part.map_in, "Existing map to import (binary or text)");
  p->add_option("--map-format", part.map_format, "Format of --out")
      ->check(CLI::IsMember({"binary", "text"}))
      ->capture_default_str();
  p->add_option("--features", part.features, "Feature file to shard into --shard-dir");
  p->add_option("--shard-dir", part.shard_dir, "Write per-machine node, edge and feature files");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Topology versus feature storage breakdown");
  add_common(r, rep.common);
  r->add_option("--graph", rep.graph, "Graph file");
  r->add_option("--preset", rep.preset, "Built-in dataset sizes")
      ->check(CLI::IsMember({"ogbn-products", "ogbn-papers100M", "all"}));
  r->add_option("--nodes", rep.nodes, "Node count");
  r->add_option("--nnz", rep.nnz, "Edge count");
  r->add_option("--dim", rep.dim, "Feature width (overrides the preset)");
  r->add_option("--dtype", rep.dtype, "Feature element type")
      ->check(CLI::IsMember({"f16", "bf16", "f32", "f64", "i8"}))
      ->capture_default_str();
  r->add_option("--index-width", rep.index_width, "Bytes per stored index")
      ->check(CLI::IsMember({4u, 8u}))
      ->capture_default_str();

  SampleBenchArgs sb;
  auto* s = app.add_subcommand("sample-bench", "Time the fused and two-step kernels");
  add_common(s, sb.common);
  add_graph_source(s, sb.graph);
  s->add_option("--fanouts", sb.fanouts, "Per-level fanouts, top level first")->capture_default_str();
  s->add_option("--batch-sizes", sb.batch_sizes, "Comma separated seed counts")->capture_default_str();
  s->add_option("--kernel", sb.kernel, "Kernels to time")
      ->check(CLI::IsMember({"fused", "two-step", "both"}))
      ->capture_default_str();
  s->add_option("--reps", sb.reps, "Timed repetitions (median reported, at least 5)")->capture_default_str();
  s->add_option("--warmup", sb.warmup, "Untimed warmups (at least 2)")->capture_default_str();
  s->add_option("--include-dst", sb.include_dst, "Destinations lead each source list")
      ->check(kOnOff)
      ->capture_default_str();
  s->add_option("--threads", sb.threads, "Sampling threads")->capture_default_str();

  DistArgs db;
  auto* d = app.add_subcommand("dist-bench", "Run one distributed epoch and report per-rank metrics");
  add_common(d, db.common);
  add_graph_source(d, db.graph);
  d->add_option("--features", db.features, "Feature file (random features otherwise)");
  d->add_option("--dim", db.dim, "Width of random features")->capture_default_str();
  d->add_option("--labels", db.labels, "Label file (random labels otherwise)");
  d->add_option("--label-fraction", db.label_fraction, "Fraction of random labels")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  d->add_option("--workers", db.workers, "Number of ranks")->capture_default_str();
  d->add_option("--rank", db.rank, "This process's rank (tcp)")->capture_default_str();
  d->add_option("--peers", db.peers, "host:port list, one per rank (tcp)");
  d->add_option("--transport", db.transport, "Collective transport")
      ->check(CLI::IsMember({"inproc", "tcp"}))
      ->capture_default_str();
  d->add_option("--mode", db.mode, "Topology placement")
      ->check(CLI::IsMember({"full", "hybrid"}))
      ->capture_default_str();
  d->add_option("--kernel", db.kernel, "Sampling kernel")
      ->check(CLI::IsMember({"fused", "two-step"}))
      ->capture_default_str();
  d->add_option("--fanouts", db.fanouts, "Per-level fanouts, top level first")->capture_default_str();
  d->add_option("--batch-size", db.batch_size, "Seeds per minibatch per rank")->capture_default_str();
  d->add_option("--include-dst", db.include_dst, "Destinations lead each source list")
      ->check(kOnOff)
      ->capture_default_str();
  d->add_option("--partition-method", db.partition_method, "Partitioner when no map is given")
      ->check(CLI::IsMember({"hash", "greedy"}))
      ->capture_default_str();
  d->add_option("--partition-map", db.partition_map, "Partition map file");
  d->add_flag("--scenarios", db.scenarios,
              "Run full+two-step, hybrid+two-step and hybrid+fused back to back");
  d->add_option("--epoch", db.epoch, "Epoch number (selects the batch shuffle)")->capture_default_str();
  d->add_option("--timeout", db.timeout_s, "TCP bootstrap and round timeout in seconds")
      ->capture_default_str();

  VerifyArgs va;
  auto* v = app.add_subcommand("verify", "Run a verification suite");
  add_common(v, va.common);
  v->add_option("suite", va.suite, "kernel, dist, formats or sampling")
      ->required()
      ->check(CLI::IsMember({"kernel", "dist", "formats", "sampling"}));
  v->add_option("--trials", va.trials, "Random instances (kernel, sampling)")->capture_default_str();
  v->add_option("--instances", va.instances, "Random instances (formats)")->capture_default_str();
  v->add_option("--workers", va.workers, "Ranks (dist)")->capture_default_str();
  v->add_option("--mode", va.mode, "Topology placement (dist)")
      ->check(CLI::IsMember({"full", "hybrid"}))
      ->capture_default_str();
  v->add_option("--kernel", va.kernel, "Sampling kernel (dist)")
      ->check(CLI::IsMember({"fused", "two-step"}))
      ->capture_default_str();
  v->add_option("--fanouts", va.fanouts, "Per-level fanouts (dist)")->capture_default_str();
  v->add_option("--batch-size", va.batch_size, "Seeds per minibatch (dist)")->capture_default_str();
  v->add_option("--nodes", va.nodes, "Graph size (dist)")->capture_default_str();
  v->add_option("--include-dst", va.include_dst, "Destinations lead each source list")
      ->check(kOnOff)
      ->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (g->parsed()) return cmd_generate(gen, out);
    if (f->parsed()) return cmd_features(feat, out);
    if (p->parsed()) return cmd_partition(part, out);
    if (r->parsed()) return cmd_report(rep, out);
    if (s->parsed()) return cmd_sample_bench(sb, out);
    if (d->parsed()) return cmd_dist_bench(db, out);
    return cmd_verify(va, out);
  } catch (const VerificationFailure& e) {
    err << "verification failed: " << e.what() << '\n';
    return kVerificationFailure;
  } catch (const ParameterError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ContractViolation& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const TransportError& e) {
    err << "transport error (rank " << e.rank() << "): " << e.what() << '\n';
    return kIoError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
}

}  // namespace fsample::cli
