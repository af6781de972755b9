#include "fsample/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "fsample/bytes.hpp"
#include "fsample/error.hpp"
#include "fsample/rng.hpp"
#include "io_detail.hpp"

namespace fsample {

namespace {

void validate_csc(std::uint64_t rows, std::uint64_t sources, std::span<const EdgeOffset> row_ptr,
                  std::span<const NodeId> col_idx) {
  if (row_ptr.size() != rows + 1) {
    throw MalformedInputError("row pointer length must be num_nodes + 1");
  }
  if (row_ptr.front() != 0) {
    throw MalformedInputError("row pointer must start at 0");
  }
  for (std::size_t i = 1; i < row_ptr.size(); ++i) {
    if (row_ptr[i] < row_ptr[i - 1]) {
      throw MalformedInputError("row pointer must be nondecreasing");
    }
  }
  if (row_ptr.back() != col_idx.size()) {
    throw MalformedInputError("row pointer end must equal the number of entries");
  }
  for (NodeId c : col_idx) {
    if (c >= sources) {
      throw MalformedInputError("column index " + std::to_string(c) + " out of range");
    }
  }
}

}  // namespace

CscGraph::CscGraph() : row_ptr_{0} {}

CscGraph::CscGraph(std::uint64_t num_nodes, std::vector<EdgeOffset> row_ptr,
                   std::vector<NodeId> col_idx)
    : CscGraph(num_nodes, num_nodes, std::move(row_ptr), std::move(col_idx)) {}

CscGraph::CscGraph(std::uint64_t num_rows, std::uint64_t num_sources,
                   std::vector<EdgeOffset> row_ptr, std::vector<NodeId> col_idx)
    : num_rows_(num_rows),
      num_sources_(num_sources),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)) {
  validate_csc(num_rows_, num_sources_, row_ptr_, col_idx_);
}

CscGraph CscGraph::from_trusted(std::uint64_t num_rows, std::uint64_t num_sources,
                                std::vector<EdgeOffset> row_ptr, std::vector<NodeId> col_idx) {
  CscGraph g;
  g.num_rows_ = num_rows;
  g.num_sources_ = num_sources;
  g.row_ptr_ = std::move(row_ptr);
  g.col_idx_ = std::move(col_idx);
  return g;
}

std::span<const NodeId> CscGraph::in_neighbors(NodeId v) const {
  if (v >= num_rows_) {
    throw ContractViolation("node " + std::to_string(v) + " out of range (num_nodes " +
                            std::to_string(num_rows_) + ")");
  }
  return in_neighbors_unchecked(v);
}

std::uint64_t CscGraph::in_degree(NodeId v) const { return in_neighbors(v).size(); }

CscGraph build_csc(const CooGraph& edges, Dedup dedup) {
  const std::uint64_t n = edges.num_nodes;
  if (edges.dst.size() != edges.src.size()) {
    throw MalformedInputError("COO dst and src arrays differ in length");
  }
  std::vector<EdgeOffset> row_ptr(n + 1, 0);
  for (std::size_t i = 0; i < edges.nnz(); ++i) {
    if (edges.dst[i] >= n || edges.src[i] >= n) {
      throw MalformedInputError("edge " + std::to_string(i) + " (" + std::to_string(edges.src[i]) +
                                " -> " + std::to_string(edges.dst[i]) + ") out of range");
    }
    ++row_ptr[edges.dst[i] + 1];
  }
  for (std::uint64_t v = 0; v < n; ++v) row_ptr[v + 1] += row_ptr[v];

  std::vector<NodeId> col_idx(edges.nnz());
  {
    std::vector<EdgeOffset> cursor(row_ptr.begin(), row_ptr.end() - 1);
    for (std::size_t i = 0; i < edges.nnz(); ++i) {
      col_idx[cursor[edges.dst[i]]++] = edges.src[i];
    }
  }
  for (std::uint64_t v = 0; v < n; ++v) {
    std::sort(col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[v]),
              col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[v + 1]));
  }

  if (dedup == Dedup::remove) {
    EdgeOffset write = 0;
    EdgeOffset row_begin = 0;
    for (std::uint64_t v = 0; v < n; ++v) {
      const EdgeOffset row_end = row_ptr[v + 1];
      for (EdgeOffset e = row_begin; e < row_end; ++e) {
        if (e == row_begin || col_idx[e] != col_idx[e - 1]) {
          col_idx[write++] = col_idx[e];
        }
      }
      row_begin = row_end;
      row_ptr[v + 1] = write;
    }
    col_idx.resize(write);
    col_idx.shrink_to_fit();
  }
  return CscGraph::from_trusted(n, n, std::move(row_ptr), std::move(col_idx));
}

CooGraph csc_to_coo(const CscGraph& g) {
  CooGraph out;
  out.num_nodes = g.num_nodes();
  out.dst.reserve(g.nnz());
  out.src.assign(g.col_idx().begin(), g.col_idx().end());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    out.dst.insert(out.dst.end(), g.in_degree(v), v);
  }
  return out;
}

CooGraph generate_erdos_renyi(std::uint64_t num_nodes, std::uint64_t num_edges, std::uint64_t seed) {
  if (num_nodes > (1ULL << 32)) {
    throw ParameterError("erdos-renyi generator supports at most 2^32 nodes");
  }
  const std::uint64_t total = num_nodes * num_nodes;
  if (num_edges > total) {
    throw ParameterError("cannot place " + std::to_string(num_edges) + " distinct edges among " +
                         std::to_string(total) + " ordered pairs");
  }
  RandomStream rng(derive_key(seed, StreamDomain::generator, 0xE5));

  // Floyd's subset sampling over pair indices dst * n + src; the complement is
  // sampled when more than half of all pairs are requested.
  const bool complement = num_edges > total / 2;
  const std::uint64_t draw = complement ? total - num_edges : num_edges;
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(draw * 2);
  for (std::uint64_t j = total - draw; j < total; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }

  std::vector<std::uint64_t> pairs;
  if (complement) {
    pairs.reserve(num_edges);
    for (std::uint64_t p = 0; p < total; ++p) {
      if (!chosen.contains(p)) pairs.push_back(p);
    }
  } else {
    pairs.assign(chosen.begin(), chosen.end());
    std::sort(pairs.begin(), pairs.end());
  }

  CooGraph out;
  out.num_nodes = num_nodes;
  out.dst.reserve(pairs.size());
  out.src.reserve(pairs.size());
  for (std::uint64_t p : pairs) {
    out.dst.push_back(p / num_nodes);
    out.src.push_back(p % num_nodes);
  }
  return out;
}

CooGraph generate_rmat(unsigned scale, std::uint64_t edge_factor, RmatProbabilities probs,
                       std::uint64_t seed) {
  if (scale > 30) {
    throw ParameterError("R-MAT scale must be at most 30, got " + std::to_string(scale));
  }
  if (probs.a < 0 || probs.b < 0 || probs.c < 0 || probs.d < 0) {
    throw ParameterError("R-MAT probabilities must be non-negative");
  }
  const double sum = probs.a + probs.b + probs.c + probs.d;
  if (!(std::abs(sum - 1.0) <= 1e-9)) {
    throw ParameterError("R-MAT probabilities must sum to 1");
  }
  const std::uint64_t n = 1ULL << scale;
  const std::uint64_t m = edge_factor * n;

  CooGraph out;
  out.num_nodes = n;
  out.dst.resize(m);
  out.src.resize(m);
  RandomStream rng(derive_key(seed, StreamDomain::generator, 0x2A7));
  const double ab = probs.a + probs.b;
  const double abc = ab + probs.c;
  for (std::uint64_t e = 0; e < m; ++e) {
    NodeId src = 0;
    NodeId dst = 0;
    for (unsigned level = 0; level < scale; ++level) {
      const NodeId bit = NodeId{1} << (scale - 1 - level);
      const double r = rng.uniform();
      if (r < probs.a) {
        continue;
      }
      if (r < ab) {
        dst |= bit;
      } else if (r < abc) {
        src |= bit;
      } else {
        src |= bit;
        dst |= bit;
      }
    }
    out.src[e] = src;
    out.dst[e] = dst;
  }
  return out;
}

FeatureMatrix::FeatureMatrix(std::uint64_t n, std::uint32_t d)
    : num_nodes(n), dim(d), data(static_cast<std::size_t>(n) * d, 0.0f) {}

FeatureMatrix::FeatureMatrix(std::uint64_t n, std::uint32_t d, std::vector<float> values)
    : num_nodes(n), dim(d), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(n) * d) {
    throw MalformedInputError("feature payload size does not match num_nodes * dim");
  }
}

FeatureMatrix generate_features(std::uint64_t num_nodes, std::uint32_t dim, std::uint64_t seed) {
  FeatureMatrix f(num_nodes, dim);
  RandomStream rng(derive_key(seed, StreamDomain::features, 0));
  for (float& x : f.data) {
    x = static_cast<float>(rng.uniform() * 2.0 - 1.0);
  }
  return f;
}

LabelSet::LabelSet(std::vector<NodeId> nodes, std::uint64_t num_nodes) : nodes_(std::move(nodes)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (i > 0 && nodes_[i] <= nodes_[i - 1]) {
      throw MalformedInputError("label set must be strictly increasing");
    }
    if (nodes_[i] >= num_nodes) {
      throw MalformedInputError("labeled node " + std::to_string(nodes_[i]) + " out of range");
    }
  }
}

LabelSet LabelSet::from_unsorted(std::vector<NodeId> nodes, std::uint64_t num_nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return LabelSet(std::move(nodes), num_nodes);
}

bool LabelSet::contains(NodeId v) const {
  return std::binary_search(nodes_.begin(), nodes_.end(), v);
}

LabelSet generate_labels(std::uint64_t num_nodes, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ParameterError("label fraction must lie in [0, 1]");
  }
  RandomStream rng(derive_key(seed, StreamDomain::generator, 0x1AB));
  std::vector<NodeId> nodes;
  for (NodeId v = 0; v < num_nodes; ++v) {
    if (rng.uniform() < fraction) nodes.push_back(v);
  }
  return LabelSet(std::move(nodes), num_nodes);
}

// ---------------------------------------------------------------------------
// Binary and text formats

namespace {

using detail::check_magic;
using detail::check_version;
using detail::read_exact;
using detail::with_ifstream;
using detail::with_ofstream;
using detail::write_bytes;

constexpr std::string_view kGraphMagic = "FSGR";
constexpr std::string_view kFeatureMagic = "FSFT";

void put_indices(ByteWriter& w, std::span<const std::uint64_t> values, unsigned width) {
  if (width == 8) {
    w.put_array<std::uint64_t>(values);
    return;
  }
  std::vector<std::uint32_t> narrow(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > std::numeric_limits<std::uint32_t>::max()) {
      throw ParameterError("value " + std::to_string(values[i]) + " does not fit a 4-byte index");
    }
    narrow[i] = static_cast<std::uint32_t>(values[i]);
  }
  w.put_array<std::uint32_t>(narrow);
}

std::vector<std::uint64_t> get_indices(std::istream& in, std::uint64_t count, unsigned width) {
  if (count > (std::numeric_limits<std::size_t>::max() / 8)) {
    throw FormatError("element count too large");
  }
  Bytes raw = read_exact(in, static_cast<std::size_t>(count) * width);
  ByteReader r(raw);
  if (width == 8) return r.get_vector<std::uint64_t>(count);
  auto narrow = r.get_vector<std::uint32_t>(count);
  return {narrow.begin(), narrow.end()};
}

}  // namespace

void write_graph(std::ostream& out, const CscGraph& g, unsigned index_width) {
  if (index_width != 4 && index_width != 8) {
    throw ParameterError("index width must be 4 or 8");
  }
  if (g.num_sources() != g.num_nodes()) {
    throw ParameterError("only square graphs can be written in the graph format");
  }
  Bytes buf;
  ByteWriter w(buf);
  w.put_magic(kGraphMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(index_width));
  w.put<std::uint64_t>(g.num_nodes());
  w.put<std::uint64_t>(g.nnz());
  put_indices(w, g.row_ptr(), index_width);
  put_indices(w, g.col_idx(), index_width);
  write_bytes(out, buf);
}

CscGraph read_graph(std::istream& in) {
  Bytes header = read_exact(in, 4 + 4 + 1 + 8 + 8);
  ByteReader r(header);
  check_magic(r, kGraphMagic);
  check_version(r.get<std::uint32_t>());
  const unsigned width = r.get<std::uint8_t>();
  if (width != 4 && width != 8) {
    throw FormatError("invalid index width " + std::to_string(width));
  }
  const auto num_nodes = r.get<std::uint64_t>();
  const auto nnz = r.get<std::uint64_t>();
  if (num_nodes == std::numeric_limits<std::uint64_t>::max()) {
    throw FormatError("node count too large");
  }
  auto row_ptr = get_indices(in, num_nodes + 1, width);
  auto col_idx = get_indices(in, nnz, width);
  try {
    return CscGraph(num_nodes, std::move(row_ptr), std::move(col_idx));
  } catch (const MalformedInputError& e) {
    throw FormatError(std::string("graph payload invalid: ") + e.what());
  }
}

void write_graph(const std::string& path, const CscGraph& g, unsigned index_width) {
  with_ofstream(path, [&](std::ostream& out) { write_graph(out, g, index_width); });
}

CscGraph read_graph(const std::string& path) {
  return with_ifstream(path, [](std::istream& in) { return read_graph(in); });
}

void write_features(std::ostream& out, const FeatureMatrix& f) {
  Bytes buf;
  ByteWriter w(buf);
  w.put_magic(kFeatureMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint64_t>(f.num_nodes);
  w.put<std::uint32_t>(f.dim);
  w.put<std::uint8_t>(0);
  w.put_array<float>(f.data);
  write_bytes(out, buf);
}

FeatureMatrix read_features(std::istream& in) {
  Bytes header = read_exact(in, 4 + 4 + 8 + 4 + 1);
  ByteReader r(header);
  check_magic(r, kFeatureMagic);
  check_version(r.get<std::uint32_t>());
  const auto num_nodes = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint32_t>();
  const auto dtype = r.get<std::uint8_t>();
  if (dtype != 0) {
    throw FormatError("unsupported feature dtype code " + std::to_string(dtype));
  }
  if (dim != 0 && num_nodes > std::numeric_limits<std::size_t>::max() / 4 / dim) {
    throw FormatError("feature matrix too large");
  }
  const std::size_t count = static_cast<std::size_t>(num_nodes) * dim;
  Bytes payload = read_exact(in, count * sizeof(float));
  ByteReader pr(payload);
  return FeatureMatrix(num_nodes, dim, pr.get_vector<float>(count));
}

void write_features(const std::string& path, const FeatureMatrix& f) {
  with_ofstream(path, [&](std::ostream& out) { write_features(out, f); });
}

FeatureMatrix read_features(const std::string& path) {
  return with_ifstream(path, [](std::istream& in) { return read_features(in); });
}

namespace {

bool skippable(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

NodeId parse_id(std::istringstream& fields, std::size_t line_no) {
  std::string token;
  if (!(fields >> token) || token.empty() ||
      token.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError("line " + std::to_string(line_no) + ": expected a non-negative integer");
  }
  try {
    return std::stoull(token);
  } catch (const std::out_of_range&) {
    throw FormatError("line " + std::to_string(line_no) + ": id out of range");
  }
}

void expect_end(std::istringstream& fields, std::size_t line_no) {
  std::string extra;
  if (fields >> extra) {
    throw FormatError("line " + std::to_string(line_no) + ": unexpected trailing field");
  }
}

}  // namespace

CooGraph read_edgelist_text(std::istream& in, std::uint64_t num_nodes) {
  CooGraph g;
  std::string line;
  std::size_t line_no = 0;
  NodeId max_id = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    std::istringstream fields(line);
    const NodeId src = parse_id(fields, line_no);
    const NodeId dst = parse_id(fields, line_no);
    expect_end(fields, line_no);
    g.src.push_back(src);
    g.dst.push_back(dst);
    max_id = std::max({max_id, src, dst});
    any = true;
  }
  if (num_nodes == 0) {
    g.num_nodes = any ? max_id + 1 : 0;
  } else {
    if (any && max_id >= num_nodes) {
      throw FormatError("edge list references node " + std::to_string(max_id) +
                        " beyond declared node count");
    }
    g.num_nodes = num_nodes;
  }
  return g;
}

CooGraph read_edgelist_text(const std::string& path, std::uint64_t num_nodes) {
  return with_ifstream(path, [&](std::istream& in) { return read_edgelist_text(in, num_nodes); });
}

void write_edgelist_text(std::ostream& out, const CooGraph& g) {
  for (std::size_t i = 0; i < g.nnz(); ++i) {
    out << g.src[i] << ' ' << g.dst[i] << '\n';
  }
}

void write_labels(std::ostream& out, const LabelSet& labels) {
  for (NodeId v : labels.nodes()) out << v << '\n';
}

LabelSet read_labels(std::istream& in, std::uint64_t num_nodes) {
  std::vector<NodeId> nodes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    std::istringstream fields(line);
    nodes.push_back(parse_id(fields, line_no));
    expect_end(fields, line_no);
  }
  try {
    return LabelSet::from_unsorted(std::move(nodes), num_nodes);
  } catch (const MalformedInputError& e) {
    throw FormatError(e.what());
  }
}

void write_labels(const std::string& path, const LabelSet& labels) {
  with_ofstream(path, [&](std::ostream& out) { write_labels(out, labels); });
}

LabelSet read_labels(const std::string& path, std::uint64_t num_nodes) {
  return with_ifstream(path, [&](std::istream& in) { return read_labels(in, num_nodes); });
}

}  // namespace fsample
