#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "fsample/partition.hpp"
#include "fsample/verify.hpp"

namespace fsample {

namespace {

CooGraph random_coo(RandomStream& s) {
  CooGraph coo;
  coo.num_nodes = 1 + s.below(64);
  const std::uint64_t m = s.below(300);
  for (std::uint64_t i = 0; i < m; ++i) {
    coo.dst.push_back(s.below(coo.num_nodes));
    coo.src.push_back(s.below(coo.num_nodes));
  }
  return coo;
}

FeatureMatrix random_features(RandomStream& s, std::uint64_t n) {
  const auto dim = static_cast<std::uint32_t>(1 + s.below(8));
  FeatureMatrix f(n, dim);
  constexpr float kSpecial[] = {0.0f,
                                -0.0f,
                                std::numeric_limits<float>::denorm_min(),
                                std::numeric_limits<float>::max(),
                                -std::numeric_limits<float>::infinity(),
                                1.0f / 3.0f};
  for (float& x : f.data) {
    x = s.below(10) == 0 ? kSpecial[s.below(std::size(kSpecial))]
                         : std::bit_cast<float>(static_cast<std::uint32_t>(s.next()) & 0xBFFFFFFFu);
  }
  return f;
}

template <typename T, typename Write, typename Read>
void binary_round_trip(const T& value, Write write, Read read, const std::string& what,
                       FormatCheckReport& rep) {
  ++rep.checks;
  std::stringstream first;
  write(first, value);
  const std::string bytes = first.str();
  std::stringstream in(bytes);
  const T back = read(in);
  std::stringstream second;
  write(second, back);
  if (!(back == value)) {
    rep.failures.push_back(what + ": decoded value differs");
  } else if (second.str() != bytes) {
    rep.failures.push_back(what + ": re-encoding is not byte-identical");
  } else if (in.peek() != std::char_traits<char>::eof()) {
    rep.failures.push_back(what + ": reader left trailing bytes");
  }
}

// Feature equality must be bitwise (NaN-free payloads, but -0.0 != 0.0 bits).
bool same_bits(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.num_nodes != b.num_nodes || a.dim != b.dim || a.data.size() != b.data.size()) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a.data[i]) != std::bit_cast<std::uint32_t>(b.data[i])) {
      return false;
    }
  }
  return true;
}

}  // namespace

FormatCheckReport check_format_round_trips(std::size_t instances, std::uint64_t seed) {
  FormatCheckReport rep;
  rep.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    RandomStream s(derive_key(seed, StreamDomain::verification, i, 0xF0));
    const std::string tag = "instance " + std::to_string(i);
    try {
      const CooGraph coo = random_coo(s);
      const CscGraph g = build_csc(coo);

      ++rep.checks;
      const CooGraph canonical = csc_to_coo(g);
      if (build_csc(canonical) != g || csc_to_coo(build_csc(canonical)) != canonical) {
        rep.failures.push_back(tag + ": COO/CSC conversion is not a fixed point");
      }

      for (unsigned width : {4u, 8u}) {
        binary_round_trip(
            g, [&](std::ostream& o, const CscGraph& x) { write_graph(o, x, width); },
            [](std::istream& in) { return read_graph(in); },
            tag + " graph width " + std::to_string(width), rep);
      }

      ++rep.checks;
      const FeatureMatrix f = random_features(s, g.num_nodes());
      {
        std::stringstream a;
        write_features(a, f);
        std::stringstream in(a.str());
        const FeatureMatrix back = read_features(in);
        std::stringstream b;
        write_features(b, back);
        if (!same_bits(back, f) || b.str() != a.str()) {
          rep.failures.push_back(tag + ": feature file round trip");
        }
      }

      ++rep.checks;
      {
        std::stringstream text;
        write_edgelist_text(text, coo);
        std::stringstream in(text.str());
        if (read_edgelist_text(in, coo.num_nodes) != coo) {
          rep.failures.push_back(tag + ": edge list text round trip");
        }
      }

      ++rep.checks;
      std::vector<NodeId> labeled;
      for (NodeId v = 0; v < g.num_nodes(); ++v) {
        if (s.below(3) == 0) labeled.push_back(v);
      }
      const LabelSet labels(labeled, g.num_nodes());
      {
        std::stringstream text;
        write_labels(text, labels);
        std::stringstream in(text.str());
        if (read_labels(in, g.num_nodes()) != labels) {
          rep.failures.push_back(tag + ": label file round trip");
        }
      }

      const auto p = static_cast<std::uint32_t>(1 + s.below(5));
      std::vector<MachineId> assignment(g.num_nodes());
      for (auto& a : assignment) a = static_cast<MachineId>(s.below(p));
      const PartitionMap pmap(assignment, p);
      binary_round_trip(
          pmap, [](std::ostream& o, const PartitionMap& x) { write_partition_map(o, x); },
          [&](std::istream& in) { return read_partition_map(in, g.num_nodes()); },
          tag + " partition map", rep);
      ++rep.checks;
      {
        std::stringstream text;
        write_partition_map_text(text, pmap);
        std::stringstream in(text.str());
        if (read_partition_map_text(in, g.num_nodes(), p) != pmap) {
          rep.failures.push_back(tag + ": partition map text round trip");
        }
      }

      std::vector<NodeId> seeds;
      for (NodeId v = 0; v < g.num_nodes(); ++v) {
        if (s.below(4) == 0) seeds.push_back(v);
      }
      const MfgBlock block = fused_sample_level(g, seeds, 1 + s.below(6), SamplerRng{s.next()}, 1,
                                                s.below(2) == 1);
      binary_round_trip(
          block, [](std::ostream& o, const MfgBlock& x) { write_block(o, x); },
          [](std::istream& in) { return read_block(in); }, tag + " block", rep);
    } catch (const std::exception& e) {
      rep.failures.push_back(tag + ": exception: " + e.what());
    }
  }
  return rep;
}

}  // namespace fsample
