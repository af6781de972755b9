#pragma once

// Benchmark result rows and their CSV / JSON encodings. Both encodings are
// lossless: doubles are printed with 17 significant digits.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fsample::cli {

struct MetricsRecord {
  std::string command;  // "sample-bench" or "dist-bench"
  std::string kernel;
  std::string mode;     // "single", "full" or "hybrid"
  std::string fanouts;  // top-down, comma separated
  std::uint64_t batch_size = 0;
  std::int64_t workers = 1;
  std::int64_t rank = -1;  // -1 marks an aggregate row
  std::uint64_t minibatches = 0;
  double sample_seconds = 0.0;
  double gather_seconds = 0.0;
  double compute_seconds = 0.0;
  double total_seconds = 0.0;
  std::uint64_t comm_rounds = 0;
  std::uint64_t rounds_per_minibatch = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t sampled_edges = 0;
  std::uint64_t coo_buffer_allocations = 0;
  double speedup = 1.0;  // baseline time / this row's time at the same point

  bool operator==(const MetricsRecord&) const = default;
};

void write_csv(std::ostream& out, const std::vector<MetricsRecord>& rows);
std::vector<MetricsRecord> read_csv(std::istream& in);

void write_json(std::ostream& out, const std::vector<MetricsRecord>& rows);
std::vector<MetricsRecord> read_json(std::istream& in);

}  // namespace fsample::cli
