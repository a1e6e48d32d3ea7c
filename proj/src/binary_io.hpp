#pragma once

// Little-endian encode/decode helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>

#include "bamp/errors.hpp"

namespace bamp::binary {

template <typename T>
void put(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits = static_cast<U>(bits >> 8);
  }
}

inline void put_f32(std::string& out, float value) { put(out, std::bit_cast<std::uint32_t>(value)); }
inline void put_f64(std::string& out, double value) { put(out, std::bit_cast<std::uint64_t>(value)); }

template <typename T>
T get(const unsigned char* in) {
  using U = std::make_unsigned_t<T>;
  U bits = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) bits = static_cast<U>((bits << 8) | in[i]);
  return static_cast<T>(bits);
}

/// Bounds-checked sequential reader over a byte buffer.
class Reader {
 public:
  Reader(const std::string& bytes, const char* what) : bytes_(bytes), what_(what) {}

  const unsigned char* take(std::size_t n) {
    if (n > bytes_.size() - offset_) throw FormatError(std::string(what_) + ": truncated");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + offset_;
    offset_ += n;
    return p;
  }

  template <typename T>
  T read() {
    return get<T>(take(sizeof(T)));
  }
  double read_f64() { return std::bit_cast<double>(read<std::uint64_t>()); }
  float read_f32() { return std::bit_cast<float>(read<std::uint32_t>()); }

  std::size_t remaining() const noexcept { return bytes_.size() - offset_; }

 private:
  const std::string& bytes_;
  const char* what_;
  std::size_t offset_ = 0;
};

}  // namespace bamp::binary
