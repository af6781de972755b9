#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "fsample/dist.hpp"
#include "fsample/error.hpp"
#include "fsample/graph.hpp"
#include "fsample/partition.hpp"
#include "fsample/sampler.hpp"
#include "fsample/verify.hpp"

namespace py = pybind11;
using namespace fsample;

namespace {

template <typename T>
py::array_t<T> to_array(std::span<const T> values) {
  py::array_t<T> arr(static_cast<py::ssize_t>(values.size()));
  std::copy(values.begin(), values.end(), arr.mutable_data());
  return arr;
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& values) {
  return to_array(std::span<const T>(values));
}

std::vector<NodeId> to_ids(py::array_t<NodeId, py::array::c_style | py::array::forcecast> arr) {
  if (arr.ndim() != 1) throw py::value_error("expected a one-dimensional id array");
  return {arr.data(), arr.data() + arr.size()};
}

Kernel kernel_from(const std::string& name) {
  if (name == "fused") return Kernel::fused;
  if (name == "two-step" || name == "two_step") return Kernel::two_step;
  throw py::value_error("kernel must be 'fused' or 'two-step'");
}

DistMode mode_from(const std::string& name) {
  if (name == "full") return DistMode::full;
  if (name == "hybrid") return DistMode::hybrid;
  throw py::value_error("mode must be 'full' or 'hybrid'");
}

py::dict block_dict(const MfgBlock& b) {
  py::dict d;
  d["dst_globals"] = to_array(b.dst_globals);
  d["src_globals"] = to_array(b.src_globals);
  d["row_ptr"] = to_array(b.block.row_ptr());
  d["col_idx"] = to_array(b.block.col_idx());
  return d;
}

py::dict sample_dict(const MiniBatchSample& s) {
  py::list blocks;
  for (const auto& b : s.blocks) blocks.append(block_dict(b));
  py::dict d;
  d["blocks"] = blocks;
  d["input_nodes"] = to_array(s.input_nodes);
  d["include_dst"] = s.include_dst;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Graph sampling engine: CSC graphs, fused block sampling, partitioning and a "
            "distributed minibatch runtime";

  // Translators run newest first, so the base class is registered before its subclasses.
  auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<ContractViolation>(m, "ContractViolation", base.ptr());
  py::register_exception<MalformedInputError>(m, "MalformedInputError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  py::class_<CscGraph>(m, "Graph")
      .def_property_readonly("num_nodes", &CscGraph::num_nodes)
      .def_property_readonly("nnz", &CscGraph::nnz)
      .def_property_readonly("row_ptr", [](const CscGraph& g) { return to_array(g.row_ptr()); })
      .def_property_readonly("col_idx", [](const CscGraph& g) { return to_array(g.col_idx()); })
      .def("in_neighbors", [](const CscGraph& g, NodeId v) { return to_array(g.in_neighbors(v)); })
      .def("in_degree", &CscGraph::in_degree)
      .def("to_coo",
           [](const CscGraph& g) {
             const CooGraph coo = csc_to_coo(g);
             return py::make_tuple(to_array(coo.src), to_array(coo.dst));
           },
           "Edges as (src, dst) arrays sorted by destination.")
      .def("save", [](const CscGraph& g, const std::string& path,
                      unsigned width) { write_graph(path, g, width); },
           py::arg("path"), py::arg("index_width") = 8)
      .def("__eq__", [](const CscGraph& a, const CscGraph& b) { return a == b; })
      .def("__repr__", [](const CscGraph& g) {
        return "<Graph nodes=" + std::to_string(g.num_nodes()) + " edges=" + std::to_string(g.nnz()) +
               ">";
      });

  m.def("from_edges",
        [](std::uint64_t num_nodes, py::array_t<NodeId, py::array::c_style | py::array::forcecast> src,
           py::array_t<NodeId, py::array::c_style | py::array::forcecast> dst, bool dedup) {
          CooGraph coo;
          coo.num_nodes = num_nodes;
          coo.src = to_ids(src);
          coo.dst = to_ids(dst);
          return build_csc(coo, dedup ? Dedup::remove : Dedup::keep);
        },
        py::arg("num_nodes"), py::arg("src"), py::arg("dst"), py::arg("dedup") = false,
        "Builds a destination-indexed graph from src -> dst edge arrays.");
  m.def("load_graph", [](const std::string& path) { return read_graph(path); }, py::arg("path"));
  m.def("generate_rmat",
        [](unsigned scale, std::uint64_t edge_factor, std::uint64_t seed,
           std::array<double, 4> probs) {
          return build_csc(generate_rmat(scale, edge_factor, {probs[0], probs[1], probs[2], probs[3]}, seed));
        },
        py::arg("scale"), py::arg("edge_factor") = 16, py::arg("seed") = 1,
        py::arg("probs") = std::array<double, 4>{0.57, 0.19, 0.19, 0.05});
  m.def("generate_erdos_renyi",
        [](std::uint64_t n, std::uint64_t edges, std::uint64_t seed) {
          return build_csc(generate_erdos_renyi(n, edges, seed));
        },
        py::arg("num_nodes"), py::arg("num_edges"), py::arg("seed") = 1);

  m.def("sample_level",
        [](const CscGraph& g, py::array_t<NodeId, py::array::c_style | py::array::forcecast> seeds,
           std::size_t fanout, std::uint64_t seed, std::uint32_t level, const std::string& kernel,
           bool include_dst) {
          const auto ids = to_ids(seeds);
          const SamplerRng rng{seed};
          const MfgBlock b = kernel_from(kernel) == Kernel::fused
                                 ? fused_sample_level(g, ids, fanout, rng, level, include_dst)
                                 : two_step_sample_level(g, ids, fanout, rng, level, include_dst);
          return block_dict(b);
        },
        py::arg("graph"), py::arg("seeds"), py::arg("fanout"), py::arg("seed") = 1,
        py::arg("level") = 1, py::arg("kernel") = "fused", py::arg("include_dst") = true);

  m.def("sample_minibatch",
        [](const CscGraph& g, py::array_t<NodeId, py::array::c_style | py::array::forcecast> batch,
           std::vector<std::uint32_t> fanouts, std::uint64_t seed, const std::string& kernel,
           bool include_dst, unsigned threads) {
          MinibatchOptions opts;
          opts.kernel = kernel_from(kernel);
          opts.include_dst = include_dst;
          opts.threads = threads;
          const auto ids = to_ids(batch);
          MiniBatchSample s;
          {
            py::gil_scoped_release release;
            s = sample_minibatch(g, ids, FanoutPlan(std::move(fanouts)), SamplerRng{seed}, opts);
          }
          return sample_dict(s);
        },
        py::arg("graph"), py::arg("batch"), py::arg("fanouts"), py::arg("seed") = 1,
        py::arg("kernel") = "fused", py::arg("include_dst") = true, py::arg("threads") = 1,
        "Samples one minibatch. Fanouts are listed top level first.");

  m.def("partition",
        [](const CscGraph& g, std::uint32_t workers, const std::string& method,
           std::optional<py::array_t<NodeId, py::array::c_style | py::array::forcecast>> labels,
           double slack) {
          PartitionMap pmap;
          if (method == "hash") {
            pmap = partition_hash(g.num_nodes(), workers);
          } else if (method == "greedy") {
            if (!labels) throw py::value_error("greedy partitioning needs labels");
            pmap = partition_greedy(g, workers, LabelSet::from_unsorted(to_ids(*labels), g.num_nodes()),
                                    slack);
          } else {
            throw py::value_error("method must be 'hash' or 'greedy'");
          }
          return py::make_tuple(to_array(pmap.assignment()), edge_cut(g, pmap));
        },
        py::arg("graph"), py::arg("workers"), py::arg("method") = "greedy",
        py::arg("labels") = py::none(), py::arg("slack") = 0.05,
        "Returns (assignment array, edge cut).");

  m.def("storage_report",
        [](std::uint64_t nodes, std::uint64_t nnz, std::uint64_t dim, std::uint64_t dtype_bytes,
           std::uint64_t index_width) {
          const StorageReport r = storage_report(nodes, nnz, dim, dtype_bytes, index_width);
          py::dict d;
          d["topology_bytes"] = r.topology_bytes;
          d["feature_bytes"] = r.feature_bytes;
          d["topology_fraction"] = r.topology_fraction;
          return d;
        },
        py::arg("num_nodes"), py::arg("nnz"), py::arg("dim"), py::arg("dtype_bytes") = 4,
        py::arg("index_width") = 4);

  m.def("verify_kernels",
        [](std::size_t trials, std::uint64_t seed) {
          KernelCheckOptions opts;
          opts.trials = trials;
          opts.seed = seed;
          KernelCheckReport rep;
          {
            py::gil_scoped_release release;
            rep = check_kernel_equivalence(opts);
          }
          py::list failures;
          for (const auto& f : rep.failures) failures.append(f.message);
          py::dict d;
          d["trials"] = rep.trials;
          d["sampled_edges"] = rep.sampled_edges;
          d["failures"] = failures;
          return d;
        },
        py::arg("trials") = 200, py::arg("seed") = 1);
  m.def("verify_formats",
        [](std::size_t instances, std::uint64_t seed) {
          const FormatCheckReport rep = check_format_round_trips(instances, seed);
          py::dict d;
          d["instances"] = rep.instances;
          d["checks"] = rep.checks;
          d["failures"] = rep.failures;
          return d;
        },
        py::arg("instances") = 100, py::arg("seed") = 1);
  m.def("verify_sampling",
        [](std::size_t graphs, std::size_t inclusion_trials, std::uint64_t seed) {
          const SamplingCheckReport rep = check_sampling_contract({graphs, inclusion_trials, seed});
          py::dict d;
          d["blocks_checked"] = rep.blocks_checked;
          d["edges_checked"] = rep.edges_checked;
          d["expected_inclusion"] = rep.expected_inclusion;
          d["max_z"] = rep.max_z;
          d["failures"] = rep.failures;
          return d;
        },
        py::arg("graphs") = 100, py::arg("inclusion_trials") = 100000, py::arg("seed") = 1);

  m.def("run_epoch",
        [](const CscGraph& g, int workers, std::vector<std::uint32_t> fanouts, std::size_t batch_size,
           const std::string& mode, const std::string& kernel, std::uint32_t dim,
           double label_fraction, bool include_dst, std::uint64_t seed) {
          ClusterInputs in;
          auto graph = std::make_shared<const CscGraph>(g);
          in.graph = graph;
          in.features = std::make_shared<const FeatureMatrix>(generate_features(g.num_nodes(), dim, seed + 1));
          in.labels = generate_labels(g.num_nodes(), label_fraction, seed + 2);
          in.pmap = std::make_shared<const PartitionMap>(
              partition_greedy(*graph, static_cast<std::uint32_t>(workers), in.labels));
          in.mode = mode_from(mode);
          in.kernel = kernel_from(kernel);
          in.include_dst = include_dst;
          in.rng = SamplerRng{seed};
          std::vector<EpochMetrics> metrics;
          {
            py::gil_scoped_release release;
            metrics = run_inproc_epoch(in, workers, FanoutPlan(std::move(fanouts)), batch_size);
          }
          py::list out;
          for (const auto& e : metrics) {
            py::dict d;
            d["rank"] = e.rank;
            d["minibatches"] = e.minibatches;
            d["local_minibatches"] = e.local_minibatches;
            d["rounds_per_minibatch"] = e.rounds_per_minibatch;
            d["comm_rounds"] = e.totals.comm_rounds;
            d["bytes_sent"] = e.totals.bytes_sent;
            d["bytes_received"] = e.totals.bytes_received;
            d["epoch_seconds"] = e.epoch_seconds;
            out.append(d);
          }
          return out;
        },
        py::arg("graph"), py::arg("workers"), py::arg("fanouts"), py::arg("batch_size") = 1000,
        py::arg("mode") = "hybrid", py::arg("kernel") = "fused", py::arg("dim") = 16,
        py::arg("label_fraction") = 0.1, py::arg("include_dst") = true, py::arg("seed") = 1,
        "Runs one epoch on an in-process cluster and returns per-rank metrics.");
}
