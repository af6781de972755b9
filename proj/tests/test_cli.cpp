#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "commands.hpp"
#include "doctest.h"
#include "fsample/error.hpp"
#include "fsample/graph.hpp"
#include "fsample/partition.hpp"
#include "metrics.hpp"

using namespace fsample;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("fsample_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

cli::MetricsRecord sample_record(int i) {
  cli::MetricsRecord r;
  r.command = "dist-bench";
  r.kernel = i % 2 ? "fused" : "two-step";
  r.mode = "say \"hi\", twice";
  r.fanouts = "15,10,5";
  r.batch_size = 1000 + i;
  r.workers = 4;
  r.rank = i - 1;
  r.minibatches = 7;
  r.sample_seconds = 0.1 * i + 1e-17;
  r.gather_seconds = 1.0 / 3.0;
  r.total_seconds = 2.5e-300;
  r.comm_rounds = 42;
  r.rounds_per_minibatch = 6;
  r.bytes_sent = ~0ULL;
  r.speedup = 1.4999999999999998;
  return r;
}

}  // namespace

TEST_CASE("metrics records survive CSV and JSON exactly") {
  std::vector<cli::MetricsRecord> rows;
  for (int i = 0; i < 4; ++i) rows.push_back(sample_record(i));
  std::stringstream csv;
  cli::write_csv(csv, rows);
  CHECK(cli::read_csv(csv) == rows);
  std::stringstream json;
  cli::write_json(json, rows);
  CHECK(cli::read_json(json) == rows);
}

TEST_CASE("malformed metrics files are format errors") {
  std::stringstream bad_header("a,b\n");
  CHECK_THROWS_AS(cli::read_csv(bad_header), FormatError);
  std::stringstream csv;
  cli::write_csv(csv, {sample_record(1)});
  std::string text = csv.str();
  std::stringstream truncated(text.substr(0, text.rfind(',')) + "\n");
  CHECK_THROWS_AS(cli::read_csv(truncated), FormatError);
  std::stringstream not_json("{\"x\": 1}");
  CHECK_THROWS_AS(cli::read_json(not_json), FormatError);
}

TEST_CASE("help and usage errors") {
  CHECK(run_cli({"--help"}).code == cli::kSuccess);
  CHECK(run_cli({}).code == cli::kUsageError);
  CHECK(run_cli({"nonsense"}).code == cli::kUsageError);
  CHECK(run_cli({"verify", "bogus"}).code == cli::kUsageError);
  CHECK(run_cli({"generate", "--scale", "40", "--out", "/nonexistent/x"}).code == cli::kUsageError);
  CHECK(run_cli({"sample-bench", "--rmat-scale", "8", "--reps", "4"}).code == cli::kUsageError);
  CHECK(run_cli({"sample-bench", "--rmat-scale", "8", "--warmup", "1"}).code == cli::kUsageError);
  CHECK(run_cli({"report", "--preset", "unknown"}).code == cli::kUsageError);
}

TEST_CASE("generate is deterministic and partition consumes its output") {
  TempDir dir;
  const auto a = run_cli({"generate", "--scale", "8", "--seed", "5", "--out", dir / "a.bin",
                          "--labels-out", dir / "l.txt", "--features-out", dir / "f.bin",
                          "--dim", "4"});
  REQUIRE(a.code == cli::kSuccess);
  REQUIRE(run_cli({"generate", "--scale", "8", "--seed", "5", "--out", dir / "b.bin"}).code == 0);
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  const CscGraph g = read_graph(dir / "a.bin");
  CHECK(g.num_nodes() == 256);
  CHECK(g.nnz() == 256 * 16);
  CHECK(read_features(dir / "f.bin").dim == 4);

  CHECK(run_cli({"partition", "--graph", dir / "a.bin", "--workers", "3"}).code == cli::kUsageError);
  const auto p = run_cli({"partition", "--graph", dir / "a.bin", "--workers", "3", "--labels",
                          dir / "l.txt", "--out", dir / "p.map"});
  REQUIRE(p.code == cli::kSuccess);
  CHECK(p.out.find("edge_cut=") != std::string::npos);
  CHECK(read_partition_map(dir / "p.map", 256, 3).num_machines() == 3);

  REQUIRE(run_cli({"generate", "--er", "--nodes", "10", "--edges", "20", "--out", dir / "small.bin"})
              .code == 0);
  CHECK(run_cli({"partition", "--graph", dir / "small.bin", "--workers", "3", "--method", "import",
                 "--map-in", dir / "p.map"})
            .code == cli::kIoError);
  CHECK(run_cli({"partition", "--graph", dir / "missing.bin"}).code == cli::kIoError);
}

TEST_CASE("report prints exact byte counts") {
  const auto r = run_cli({"report", "--preset", "ogbn-products"});
  REQUIRE(r.code == cli::kSuccess);
  CHECK(r.out.find("topology_bytes=506000004") != std::string::npos);
  CHECK(r.out.find("feature_bytes=1000000000") != std::string::npos);
  const auto custom = run_cli({"report", "--nodes", "10", "--nnz", "5", "--dim", "2", "--dtype", "f64",
                               "--index-width", "8"});
  CHECK(custom.out.find("topology_bytes=128 feature_bytes=160") != std::string::npos);
}

TEST_CASE("sample-bench reports both kernels and a speedup") {
  TempDir dir;
  const auto r = run_cli({"sample-bench", "--rmat-scale", "10", "--batch-sizes", "64,128", "--fanouts",
                          "4,3", "--format", "json", "--out", dir / "bench.json"});
  REQUIRE(r.code == cli::kSuccess);
  std::ifstream in(dir / "bench.json");
  const auto rows = cli::read_json(in);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].kernel == "fused");
  CHECK(rows[0].coo_buffer_allocations == 0);
  CHECK(rows[1].kernel == "two-step");
  CHECK(rows[1].coo_buffer_allocations > 0);
  CHECK(rows[0].speedup > 0.0);
  CHECK(rows[0].sampled_edges == rows[1].sampled_edges);
}

TEST_CASE("dist-bench emits per-rank rows and an aggregate") {
  TempDir dir;
  const auto r = run_cli({"dist-bench", "--rmat-scale", "9", "--workers", "2", "--mode", "full",
                          "--fanouts", "3,2,2", "--batch-size", "20", "--dim", "4", "--out",
                          dir / "d.csv"});
  REQUIRE(r.code == cli::kSuccess);
  CHECK(r.out.find("rounds_per_minibatch=6") != std::string::npos);
  std::ifstream in(dir / "d.csv");
  const auto rows = cli::read_csv(in);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].rank == -1);
  CHECK(rows[2].bytes_sent == rows[0].bytes_sent + rows[1].bytes_sent);
  for (const auto& row : rows) CHECK(row.rounds_per_minibatch == 6);
}

TEST_CASE("verify suites succeed on a correct build") {
  CHECK(run_cli({"verify", "kernel", "--trials", "10"}).code == cli::kSuccess);
  CHECK(run_cli({"verify", "formats", "--instances", "5"}).code == cli::kSuccess);
  CHECK(run_cli({"verify", "sampling", "--trials", "5"}).code == cli::kSuccess);
  const auto d = run_cli({"verify", "dist", "--workers", "2", "--mode", "full", "--nodes", "300",
                          "--fanouts", "4,3,2", "--batch-size", "16"});
  CHECK(d.code == cli::kSuccess);
  CHECK(d.out.find("rounds_per_minibatch=6") != std::string::npos);
}
