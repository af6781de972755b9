#pragma once

// Little-endian encoding helpers shared by the file formats and wire payloads.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "fsample/error.hpp"

namespace fsample {

using Bytes = std::vector<std::uint8_t>;

namespace detail {

template <typename T>
T byteswap_value(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
    std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    return byteswap_value(value);
  }
}

}  // namespace detail

class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes& out) : out_(&out) {}

  template <typename T>
  void put(T value) {
    static_assert(std::is_arithmetic_v<T>);
    value = detail::to_little(value);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    buffer().insert(buffer().end(), p, p + sizeof(T));
  }

  template <typename T>
  void put_array(std::span<const T> values) {
    static_assert(std::is_arithmetic_v<T>);
    const std::size_t offset = buffer().size();
    buffer().resize(offset + values.size_bytes());
    if constexpr (std::endian::native == std::endian::little) {
      if (!values.empty()) {
        std::memcpy(buffer().data() + offset, values.data(), values.size_bytes());
      }
    } else {
      for (std::size_t i = 0; i < values.size(); ++i) {
        T v = detail::to_little(values[i]);
        std::memcpy(buffer().data() + offset + i * sizeof(T), &v, sizeof(T));
      }
    }
  }

  void put_magic(std::string_view magic) {
    buffer().insert(buffer().end(), magic.begin(), magic.end());
  }

  Bytes& buffer() { return out_ != nullptr ? *out_ : own_; }
  Bytes take() { return std::move(buffer()); }

 private:
  Bytes* out_ = nullptr;
  Bytes own_;
};

/// Bounds-checked reader; running off the end throws TruncatedError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T get() {
    static_assert(std::is_arithmetic_v<T>);
    require(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return detail::to_little(value);
  }

  template <typename T>
  void get_array(std::span<T> out) {
    require(out.size_bytes());
    if (!out.empty()) {
      std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
    }
    if constexpr (std::endian::native != std::endian::little) {
      for (auto& v : out) v = detail::to_little(v);
    }
    pos_ += out.size_bytes();
  }

  template <typename T>
  std::vector<T> get_vector(std::size_t count) {
    if (count > remaining() / sizeof(T)) {
      throw TruncatedError("payload shorter than declared element count");
    }
    std::vector<T> out(count);
    get_array<T>(out);
    return out;
  }

  bool magic_matches(std::string_view magic) {
    require(magic.size());
    const bool ok = std::memcmp(data_.data() + pos_, magic.data(), magic.size()) == 0;
    pos_ += magic.size();
    return ok;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n) const {
    if (n > remaining()) {
      throw TruncatedError("unexpected end of data");
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace fsample
