#include "metrics.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <type_traits>

#include "fsample/error.hpp"
#include "json.hpp"

namespace fsample::cli {

namespace {

template <typename Record, typename Fn>
void for_each_field(Record& r, Fn&& fn) {
  fn("command", r.command);
  fn("kernel", r.kernel);
  fn("mode", r.mode);
  fn("fanouts", r.fanouts);
  fn("batch_size", r.batch_size);
  fn("workers", r.workers);
  fn("rank", r.rank);
  fn("minibatches", r.minibatches);
  fn("sample_seconds", r.sample_seconds);
  fn("gather_seconds", r.gather_seconds);
  fn("compute_seconds", r.compute_seconds);
  fn("total_seconds", r.total_seconds);
  fn("comm_rounds", r.comm_rounds);
  fn("rounds_per_minibatch", r.rounds_per_minibatch);
  fn("bytes_sent", r.bytes_sent);
  fn("bytes_received", r.bytes_received);
  fn("sampled_edges", r.sampled_edges);
  fn("coo_buffer_allocations", r.coo_buffer_allocations);
  fn("speedup", r.speedup);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Splits one CSV line, honouring double-quoted fields with "" escapes.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw FormatError("unterminated quote in CSV line");
  fields.push_back(std::move(cur));
  return fields;
}

template <typename T>
void parse_field(const std::string& text, const char* name, T& out) {
  if constexpr (std::is_same_v<T, std::string>) {
    out = text;
  } else if constexpr (std::is_same_v<T, double>) {
    char* end = nullptr;
    out = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size()) {
      throw FormatError(std::string("bad number in column ") + name + ": '" + text + "'");
    }
  } else {
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw FormatError(std::string("bad integer in column ") + name + ": '" + text + "'");
    }
  }
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<MetricsRecord>& rows) {
  MetricsRecord header_probe;
  bool first = true;
  for_each_field(header_probe, [&](const char* name, auto&) {
    out << (first ? "" : ",") << name;
    first = false;
  });
  out << '\n';
  for (const auto& row : rows) {
    first = true;
    for_each_field(row, [&](const char*, const auto& value) {
      using T = std::decay_t<decltype(value)>;
      if (!first) out << ',';
      first = false;
      if constexpr (std::is_same_v<T, std::string>) {
        out << quote(value);
      } else if constexpr (std::is_same_v<T, double>) {
        out << format_double(value);
      } else {
        out << value;
      }
    });
    out << '\n';
  }
}

std::vector<MetricsRecord> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty metrics CSV");
  std::vector<std::string> expected;
  MetricsRecord probe;
  for_each_field(probe, [&](const char* name, auto&) { expected.emplace_back(name); });
  if (split_csv(line) != expected) throw FormatError("unexpected metrics CSV header");

  std::vector<MetricsRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != expected.size()) {
      throw FormatError("metrics CSV row has " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(expected.size()));
    }
    MetricsRecord r;
    std::size_t i = 0;
    for_each_field(r, [&](const char* name, auto& value) { parse_field(fields[i++], name, value); });
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_json(std::ostream& out, const std::vector<MetricsRecord>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json obj = nlohmann::json::object();
    for_each_field(row, [&](const char* name, const auto& value) { obj[name] = value; });
    arr.push_back(std::move(obj));
  }
  out << arr.dump(2) << '\n';
}

std::vector<MetricsRecord> read_json(std::istream& in) {
  nlohmann::json arr;
  try {
    in >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics JSON: ") + e.what());
  }
  if (!arr.is_array()) throw FormatError("metrics JSON must be an array");
  std::vector<MetricsRecord> rows;
  for (const auto& obj : arr) {
    MetricsRecord r;
    try {
      for_each_field(r, [&](const char* name, auto& value) { obj.at(name).get_to(value); });
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("metrics JSON: ") + e.what());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace fsample::cli
