#pragma once

// Counter-based random streams. Every stream is a pure function of its key,
// so results never depend on call order, thread count or process layout.

#include <cstdint>

namespace fsample {

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t key, std::uint64_t value) {
  return mix64(key ^ mix64(value + 0x9E3779B97F4A7C15ULL));
}

/// Splitmix64 sequence starting from a derived key: output i is
/// mix64(key + (i + 1) * golden).
class RandomStream {
 public:
  explicit constexpr RandomStream(std::uint64_t key) : state_(key) {}

  constexpr std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  __extension__ typedef unsigned __int128 Wide;

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    Wide m = static_cast<Wide>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<Wide>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Domain tags keep the streams of different consumers disjoint.
enum class StreamDomain : std::uint64_t {
  neighbor_choice = 1,
  seed_batches = 2,
  generator = 3,
  features = 4,
  verification = 5,
};

constexpr std::uint64_t derive_key(std::uint64_t seed, StreamDomain domain, std::uint64_t a,
                                   std::uint64_t b = 0) {
  std::uint64_t key = mix64(seed ^ 0x5851F42D4C957F2DULL);
  key = hash_combine(key, static_cast<std::uint64_t>(domain));
  key = hash_combine(key, a);
  key = hash_combine(key, b);
  return key;
}

}  // namespace fsample
