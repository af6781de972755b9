#pragma once

// Stream helpers shared by the binary file readers and writers.

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "fsample/bytes.hpp"
#include "fsample/error.hpp"
#include "fsample/graph.hpp"

namespace fsample::detail {

inline Bytes read_exact(std::istream& in, std::size_t n) {
  Bytes buf(n);
  if (n > 0) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  }
  if (static_cast<std::size_t>(in.gcount()) != n && n > 0) {
    throw TruncatedError("stream ended after " + std::to_string(in.gcount()) + " of " +
                         std::to_string(n) + " bytes");
  }
  return buf;
}

inline void write_bytes(std::ostream& out, const Bytes& b) {
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw Error("write failed");
}

inline void check_magic(ByteReader& r, std::string_view magic) {
  if (!r.magic_matches(magic)) {
    throw BadMagicError("expected magic " + std::string(magic));
  }
}

inline void check_version(std::uint32_t version) {
  if (version != kFormatVersion) {
    throw VersionError("unsupported format version " + std::to_string(version));
  }
}

template <typename Fn>
inline auto with_ifstream(const std::string& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path + " for reading");
  return fn(in);
}

template <typename Fn>
inline void with_ofstream(const std::string& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  fn(out);
  out.flush();
  if (!out) throw Error("write to " + path + " failed");
}

}  // namespace fsample::detail
