#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "fsample/error.hpp"
#include "fsample/partition.hpp"
#include "fsample/rng.hpp"

using namespace fsample;

TEST_CASE("edge cut on the five-node fixture") {
  const CscGraph g = fixtures::g1();
  const PartitionMap pmap({0, 0, 0, 1, 1}, 2);
  CHECK(edge_cut(g, pmap) == 3);
  CHECK(edge_cut(g, PartitionMap({0, 0, 0, 0, 0}, 1)) == 0);
  CHECK(pmap.owned_nodes(1) == std::vector<NodeId>{3, 4});
  CHECK(pmap.node_counts() == std::vector<std::uint64_t>{3, 2});
  CHECK_THROWS_AS(PartitionMap({0, 2}, 2), MalformedInputError);
}

TEST_CASE("graph partition keeps owned rows with global sources") {
  const CscGraph g = fixtures::g1();
  const PartitionMap pmap({0, 0, 0, 1, 1}, 2);
  const GraphPartition part = build_graph_partition(g, pmap, 1);
  CHECK(part.owned_nodes == std::vector<NodeId>{3, 4});
  CHECK(part.in_neighbors(3).empty());
  const auto row4 = part.in_neighbors(4);
  CHECK(std::vector<NodeId>(row4.begin(), row4.end()) == std::vector<NodeId>{2, 3});
  CHECK(part.local_row(4) == 1);
  CHECK_FALSE(part.local_row(0).has_value());
}

TEST_CASE("feature shard lookups") {
  FeatureMatrix f(5, 2);
  for (NodeId v = 0; v < 5; ++v) {
    f.row(v)[0] = static_cast<float>(v);
    f.row(v)[1] = static_cast<float>(10 * v);
  }
  const FeatureShard shard = build_feature_shard(f, PartitionMap({0, 1, 0, 1, 0}, 2), 1);
  CHECK(shard.owned_nodes == std::vector<NodeId>{1, 3});
  CHECK(shard.dim() == 2);
  CHECK(shard.row(3)[1] == 30.0f);
  CHECK_THROWS_AS(shard.row(2), ProtocolError);
}

TEST_CASE("hash partition") {
  const PartitionMap p = partition_hash(7, 3);
  CHECK(std::vector<MachineId>(p.assignment().begin(), p.assignment().end()) ==
        std::vector<MachineId>{0, 1, 2, 0, 1, 2, 0});
}

TEST_CASE("greedy partition separates two cliques") {
  const CscGraph g = fixtures::two_cliques();
  std::vector<NodeId> all(20);
  for (NodeId v = 0; v < 20; ++v) all[v] = v;
  const LabelSet labels(all);
  const PartitionMap greedy = partition_greedy(g, 2, labels);
  CHECK(edge_cut(g, greedy) == 0);
  CHECK(edge_cut(g, partition_hash(20, 2)) > 0);
  CHECK(greedy.node_counts() == std::vector<std::uint64_t>{10, 10});
}

TEST_CASE("greedy partition honours capacities on random graphs") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const std::uint64_t n = 500;
    const CscGraph g = build_csc(generate_erdos_renyi(n, 3000, seed));
    const LabelSet labels = generate_labels(n, 0.2, seed);
    for (std::uint32_t p : {2u, 3u, 4u}) {
      const double slack = 0.05;
      const PartitionMap pmap = partition_greedy(g, p, labels, slack);
      const BalanceStats stats = balance_stats(g, pmap, labels);
      const auto node_cap = static_cast<std::uint64_t>(
          std::floor((1 + slack) * static_cast<double>((n + p - 1) / p)));
      const auto label_cap = static_cast<std::uint64_t>(
          std::floor((1 + slack) * static_cast<double>((labels.size() + p - 1) / p)));
      std::uint64_t total_labeled = 0;
      for (std::uint32_t m = 0; m < p; ++m) {
        CHECK(stats.nodes[m] <= node_cap);
        CHECK(stats.labeled[m] <= label_cap);
        total_labeled += stats.labeled[m];
      }
      CHECK(total_labeled == labels.size());
      CHECK(edge_cut(g, pmap) <= edge_cut(g, partition_hash(n, p)));
    }
  }
  CHECK_THROWS_AS(partition_greedy(fixtures::g1(), 2, LabelSet{}, -0.1), ParameterError);
}

TEST_CASE("storage report closed form") {
  const StorageReport small = storage_report(5, 9, 2, 4, 8);
  CHECK(small.topology_bytes == (5 + 1 + 9) * 8);
  CHECK(small.feature_bytes == 5 * 2 * 4);

  const StorageReport papers = storage_report(111000000, 3200000000ULL, 128, 4, 4);
  CHECK(papers.topology_bytes == (111000000ULL + 1 + 3200000000ULL) * 4);
  CHECK(papers.feature_bytes == 111000000ULL * 128 * 4);
  CHECK(papers.topology_fraction == doctest::Approx(0.189).epsilon(0.01));

  const StorageReport products = storage_report(2500000, 124000000, 100, 4, 4);
  CHECK(products.topology_bytes == 506000004ULL);
  CHECK(products.feature_bytes == 1000000000ULL);
}

TEST_CASE("partition map files") {
  const PartitionMap pmap({0, 1, 1, 0, 2}, 3);
  std::stringstream bin;
  write_partition_map(bin, pmap);
  CHECK(read_partition_map(bin, 5) == pmap);

  std::stringstream bin2;
  write_partition_map(bin2, pmap);
  CHECK_THROWS_AS(read_partition_map(bin2, 6), FormatError);

  std::stringstream text;
  write_partition_map_text(text, pmap);
  std::stringstream text_in(text.str());
  CHECK(read_partition_map_text(text_in, 5, 3) == pmap);

  std::stringstream short_map("0 0\n1 1\n");
  CHECK_THROWS_AS(read_partition_map_text(short_map, 5, 3), FormatError);
  std::stringstream dup("0 0\n0 1\n1 0\n");
  CHECK_THROWS_AS(read_partition_map_text(dup, 2, 2), FormatError);
  std::stringstream big("0 0\n1 7\n");
  CHECK_THROWS_AS(read_partition_map_text(big, 2, 2), FormatError);
}

TEST_CASE("partition examples: text map, zero-dim report, single machine") {
  std::stringstream in("0 1\n1 0\n");
  const PartitionMap pmap = read_partition_map_text(in, 2, 2);
  CHECK(std::vector<MachineId>(pmap.assignment().begin(), pmap.assignment().end()) ==
        std::vector<MachineId>{1, 0});
  CHECK(storage_report(10, 20, 0, 4, 4).topology_fraction == 1.0);

  const CscGraph g = fixtures::g1();
  const PartitionMap one = partition_greedy(g, 1, LabelSet({0, 2}));
  CHECK(edge_cut(g, one) == 0);
  CHECK(build_graph_partition(g, one, 0).local_csc == g);
  const PartitionMap h = partition_hash(5, 2);
  CHECK(std::vector<MachineId>(h.assignment().begin(), h.assignment().end()) ==
        std::vector<MachineId>{0, 1, 0, 1, 0});
}

TEST_CASE("partitions reassemble the parent graph and shards match global rows") {
  const CscGraph g = build_csc(generate_erdos_renyi(300, 2000, 17));
  const FeatureMatrix f = generate_features(300, 5, 2);
  const PartitionMap pmap = partition_greedy(g, 3, generate_labels(300, 0.25, 1));
  std::vector<int> covered(300, 0);
  for (MachineId m = 0; m < 3; ++m) {
    const GraphPartition part = build_graph_partition(g, pmap, m);
    const FeatureShard shard = build_feature_shard(f, pmap, m);
    for (NodeId v : part.owned_nodes) {
      covered[v]++;
      const auto mine = part.in_neighbors(v);
      const auto full = g.in_neighbors(v);
      CHECK(std::equal(mine.begin(), mine.end(), full.begin(), full.end()));
    }
    for (NodeId v = 0; v < 300; ++v) CHECK(shard.lookup(v).has_value() == (pmap.owner(v) == m));
  }
  for (int c : covered) CHECK(c == 1);

  RandomStream s(99);
  for (int probe = 0; probe < 1000; ++probe) {
    const NodeId v = s.below(300);
    const FeatureShard shard = build_feature_shard(f, pmap, pmap.owner(v));
    const auto got = shard.row(v);
    const auto want = f.row(v);
    CHECK(std::equal(got.begin(), got.end(), want.begin(), want.end()));
  }
}
