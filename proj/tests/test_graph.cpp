#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "fsample/error.hpp"
#include "fsample/graph.hpp"
#include "fsample/rng.hpp"

using namespace fsample;

namespace {

std::vector<std::uint64_t> vec(std::span<const std::uint64_t> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("build_csc on the five-node fixture") {
  const CscGraph g = fixtures::g1();
  CHECK(vec(g.row_ptr()) == std::vector<std::uint64_t>{0, 2, 3, 7, 7, 9});
  CHECK(vec(g.col_idx()) == std::vector<std::uint64_t>{1, 2, 0, 0, 1, 3, 4, 2, 3});
  CHECK(g.num_nodes() == 5);
  CHECK(g.nnz() == 9);
}

TEST_CASE("build_csc edge cases") {
  const CscGraph empty = build_csc(CooGraph{3, {}, {}});
  CHECK(vec(empty.row_ptr()) == std::vector<std::uint64_t>{0, 0, 0, 0});
  CHECK(empty.nnz() == 0);

  const CscGraph loop = build_csc(CooGraph{1, {0}, {0}});
  CHECK(vec(loop.row_ptr()) == std::vector<std::uint64_t>{0, 1});
  CHECK(vec(loop.col_idx()) == std::vector<std::uint64_t>{0});

  CHECK_THROWS_AS(build_csc(CooGraph{2, {0}, {2}}), MalformedInputError);
  CHECK_THROWS_AS(build_csc(CooGraph{2, {5}, {0}}), MalformedInputError);
  CHECK_THROWS_AS(build_csc(CooGraph{2, {0, 1}, {0}}), MalformedInputError);
}

TEST_CASE("dedup flag removes repeated edges only on request") {
  const CooGraph coo{3, {1, 1, 1, 0}, {2, 0, 2, 1}};
  CHECK(build_csc(coo).nnz() == 4);
  const CscGraph d = build_csc(coo, Dedup::remove);
  CHECK(d.nnz() == 3);
  CHECK(vec(d.in_neighbors(1)) == std::vector<std::uint64_t>{0, 2});
}

TEST_CASE("csc_to_coo inverts build_csc") {
  const CooGraph back = csc_to_coo(fixtures::g1());
  CHECK(back == fixtures::g1_coo());
  CHECK(csc_to_coo(build_csc(CooGraph{3, {}, {}})).nnz() == 0);
  const CooGraph one = csc_to_coo(build_csc(CooGraph{1, {0}, {0}}));
  CHECK(one.dst == std::vector<NodeId>{0});
  CHECK(one.src == std::vector<NodeId>{0});
}

TEST_CASE("in_neighbors views") {
  const CscGraph g = fixtures::g1();
  CHECK(vec(g.in_neighbors(2)) == std::vector<std::uint64_t>{0, 1, 3, 4});
  CHECK(g.in_neighbors(3).empty());
  CHECK(vec(g.in_neighbors(1)) == std::vector<std::uint64_t>{0});
  CHECK(g.in_degree(4) == 2);
  CHECK_THROWS_AS(g.in_neighbors(5), ContractViolation);
}

TEST_CASE("CscGraph constructor validates invariants") {
  CHECK_THROWS_AS(CscGraph(2, {1, 1, 1}, {0}), MalformedInputError);
  CHECK_THROWS_AS(CscGraph(2, {0, 2, 1}, {0, 1}), MalformedInputError);
  CHECK_THROWS_AS(CscGraph(2, {0, 1, 2}, {0}), MalformedInputError);
  CHECK_THROWS_AS(CscGraph(2, {0, 1, 1}, {2}), MalformedInputError);
  CHECK_THROWS_AS(CscGraph(2, {0, 1}, {0}), MalformedInputError);
  CHECK_NOTHROW(CscGraph(2, 7, {0, 1, 1}, {6}));
}

TEST_CASE("random COO round trip is a fixed point") {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    RandomStream s(trial + 100);
    CooGraph coo;
    coo.num_nodes = 1 + s.below(40);
    const auto m = s.below(200);
    for (std::uint64_t i = 0; i < m; ++i) {
      coo.dst.push_back(s.below(coo.num_nodes));
      coo.src.push_back(s.below(coo.num_nodes));
    }
    const CscGraph g = build_csc(coo);
    CHECK(build_csc(csc_to_coo(g)) == g);
    std::uint64_t total = 0;
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      std::uint64_t brute = 0;
      for (std::size_t i = 0; i < coo.nnz(); ++i) brute += coo.dst[i] == v ? 1 : 0;
      CHECK(g.in_degree(v) == brute);
      total += g.in_degree(v);
    }
    CHECK(total == g.nnz());
  }
}

TEST_CASE("Erdos-Renyi generator") {
  CHECK(generate_erdos_renyi(4, 0, 1).nnz() == 0);
  const CooGraph full = generate_erdos_renyi(2, 4, 1);
  CHECK(full.dst == std::vector<NodeId>{0, 0, 1, 1});
  CHECK(full.src == std::vector<NodeId>{0, 1, 0, 1});
  const CooGraph a = generate_erdos_renyi(100, 500, 7);
  CHECK(a == generate_erdos_renyi(100, 500, 7));
  CHECK(a.nnz() == 500);
  CHECK(build_csc(a, Dedup::remove).nnz() == 500);
  const CooGraph dense = generate_erdos_renyi(30, 800, 3);
  CHECK(build_csc(dense, Dedup::remove).nnz() == 800);
  CHECK_THROWS_AS(generate_erdos_renyi(3, 10, 1), ParameterError);
}

TEST_CASE("R-MAT generator") {
  const CooGraph small = generate_rmat(3, 2, {}, 5);
  CHECK(small.num_nodes == 8);
  CHECK(small.nnz() == 16);
  CHECK(generate_rmat(6, 4, {}, 42) == generate_rmat(6, 4, {}, 42));
  CHECK_THROWS_AS(generate_rmat(40, 1, {}, 1), ParameterError);
  CHECK_THROWS_AS(generate_rmat(4, 1, {0.5, 0.5, 0.5, 0.0}, 1), ParameterError);

  // Uniform probabilities: each top-level quadrant is Binomial(m, 1/4).
  const CooGraph g = generate_rmat(10, 16, {0.25, 0.25, 0.25, 0.25}, 11);
  const double m = static_cast<double>(g.nnz());
  const NodeId half = g.num_nodes / 2;
  double counts[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < g.nnz(); ++i) {
    const int q = (g.src[i] >= half ? 2 : 0) + (g.dst[i] >= half ? 1 : 0);
    counts[q] += 1;
  }
  const double sigma = std::sqrt(m * 0.25 * 0.75);
  for (double c : counts) CHECK(std::abs(c - m / 4) < 5 * sigma);
}

TEST_CASE("graph file round trip, both index widths") {
  const CscGraph g = fixtures::g1();
  for (unsigned width : {4u, 8u}) {
    std::stringstream buf;
    write_graph(buf, g, width);
    CHECK(buf.str().size() == 25 + (6 + 9) * width);
    CHECK(read_graph(buf) == g);
  }
  std::stringstream bad;
  CHECK_THROWS_AS(write_graph(bad, g, 3), ParameterError);
}

TEST_CASE("graph file errors are distinct") {
  std::stringstream buf;
  write_graph(buf, fixtures::g1(), 8);
  const std::string bytes = buf.str();

  std::string magic = bytes;
  magic[0] = 'X';
  std::stringstream m(magic);
  CHECK_THROWS_AS(read_graph(m), BadMagicError);

  std::string version = bytes;
  version[4] = 9;
  std::stringstream v(version);
  CHECK_THROWS_AS(read_graph(v), VersionError);

  std::stringstream t(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_graph(t), TruncatedError);
}

TEST_CASE("feature file round trip and truncation") {
  const FeatureMatrix f = generate_features(7, 3, 9);
  for (float x : f.data) {
    CHECK(x >= -1.0f);
    CHECK(x < 1.0f);
  }
  std::stringstream buf;
  write_features(buf, f);
  CHECK(read_features(buf) == f);

  std::stringstream whole;
  write_features(whole, f);
  const std::string bytes = whole.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_features(cut), TruncatedError);
}

TEST_CASE("edge list text uses src dst columns") {
  std::stringstream in("# comment\n1 0\n\n2 0\n");
  const CooGraph g = read_edgelist_text(in);
  CHECK(g.num_nodes == 3);
  CHECK(g.dst == std::vector<NodeId>{0, 0});
  CHECK(g.src == std::vector<NodeId>{1, 2});

  std::stringstream out;
  write_edgelist_text(out, g);
  std::stringstream again(out.str());
  CHECK(read_edgelist_text(again, 3) == g);

  std::stringstream junk("1 x\n");
  CHECK_THROWS_AS(read_edgelist_text(junk), FormatError);
}

TEST_CASE("label sets") {
  CHECK_THROWS_AS(LabelSet({3, 1}), MalformedInputError);
  CHECK_THROWS_AS(LabelSet({1, 1}), MalformedInputError);
  CHECK_THROWS_AS(LabelSet({1, 9}, 5), MalformedInputError);
  const LabelSet l = LabelSet::from_unsorted({4, 1, 4, 2});
  CHECK(std::vector<NodeId>(l.nodes().begin(), l.nodes().end()) == std::vector<NodeId>{1, 2, 4});
  CHECK(l.contains(2));
  CHECK_FALSE(l.contains(3));

  std::stringstream buf;
  write_labels(buf, l);
  CHECK(read_labels(buf) == l);

  const LabelSet gen = generate_labels(1000, 0.3, 4);
  CHECK(gen == generate_labels(1000, 0.3, 4));
  CHECK(gen.size() > 200);
  CHECK(gen.size() < 400);
}
