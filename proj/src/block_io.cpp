#include <limits>
#include <string_view>

#include "fsample/sampler.hpp"
#include "io_detail.hpp"

namespace fsample {

namespace {

constexpr std::string_view kBlockMagic = "FSMB";
constexpr std::size_t kBlockHeaderBytes = 4 + 4 + 8 + 8 + 8;

std::vector<std::uint64_t> read_u64s(std::istream& in, std::uint64_t count) {
  if (count > std::numeric_limits<std::size_t>::max() / 8) {
    throw FormatError("element count too large");
  }
  const Bytes raw = detail::read_exact(in, static_cast<std::size_t>(count) * 8);
  ByteReader r(raw);
  return r.get_vector<std::uint64_t>(count);
}

}  // namespace

void write_block(std::ostream& out, const MfgBlock& block) {
  if (block.block.num_nodes() != block.dst_globals.size() ||
      block.block.num_sources() != block.src_globals.size()) {
    throw ParameterError("block arrays disagree with its id lists");
  }
  Bytes buf;
  ByteWriter w(buf);
  w.put_magic(kBlockMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint64_t>(block.dst_globals.size());
  w.put<std::uint64_t>(block.src_globals.size());
  w.put<std::uint64_t>(block.block.nnz());
  w.put_array<std::uint64_t>(block.block.row_ptr());
  w.put_array<std::uint64_t>(block.block.col_idx());
  w.put_array<std::uint64_t>(block.dst_globals);
  w.put_array<std::uint64_t>(block.src_globals);
  detail::write_bytes(out, buf);
}

MfgBlock read_block(std::istream& in) {
  const Bytes header = detail::read_exact(in, kBlockHeaderBytes);
  ByteReader r(header);
  detail::check_magic(r, kBlockMagic);
  detail::check_version(r.get<std::uint32_t>());
  const auto num_dst = r.get<std::uint64_t>();
  const auto num_src = r.get<std::uint64_t>();
  const auto nnz = r.get<std::uint64_t>();
  if (num_dst == std::numeric_limits<std::uint64_t>::max()) {
    throw FormatError("destination count too large");
  }
  auto row_ptr = read_u64s(in, num_dst + 1);
  auto col_idx = read_u64s(in, nnz);
  MfgBlock block;
  block.dst_globals = read_u64s(in, num_dst);
  block.src_globals = read_u64s(in, num_src);
  try {
    block.block = CscGraph(num_dst, num_src, std::move(row_ptr), std::move(col_idx));
  } catch (const MalformedInputError& e) {
    throw FormatError(std::string("block payload invalid: ") + e.what());
  }
  return block;
}

void write_block(const std::string& path, const MfgBlock& block) {
  detail::with_ofstream(path, [&](std::ostream& out) { write_block(out, block); });
}

MfgBlock read_block(const std::string& path) {
  return detail::with_ifstream(path, [](std::istream& in) { return read_block(in); });
}

}  // namespace fsample
