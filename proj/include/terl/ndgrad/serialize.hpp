#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "terl/ndgrad/tensor.hpp"

namespace terl::ndgrad {

/// Raised when a serialized stream is truncated or inconsistent.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

namespace io {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b.data(), 4);
}

inline void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError(std::string("truncated stream reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is, const char* what) { return std::bit_cast<float>(get_u32(is, what)); }

}  // namespace io

/// Tensor block: u32 entry count, then per entry
/// u32 name length, UTF-8 name, u32 rank, u32 dims, f32 payload (all little-endian).
template <typename T>
void write_tensor_block(std::ostream& os, const NamedTensors<T>& entries) {
  io::put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    io::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) io::put_u32(os, static_cast<std::uint32_t>(d));
    for (T v : t.data()) io::put_f32(os, static_cast<float>(v));
  }
}

template <typename T>
NamedTensors<T> read_tensor_block(std::istream& is) {
  constexpr std::uint32_t kMaxName = 4096, kMaxRank = 8;
  constexpr std::uint64_t kMaxElems = 1ull << 28;
  const std::uint32_t count = io::get_u32(is, "entry count");
  NamedTensors<T> out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t len = io::get_u32(is, "name length");
    if (len == 0 || len > kMaxName) throw FormatError("implausible tensor name length " + std::to_string(len));
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated stream reading tensor name");
    const std::uint32_t rank = io::get_u32(is, "rank");
    if (rank == 0 || rank > kMaxRank) throw FormatError("implausible rank for '" + name + "'");
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = io::get_u32(is, "dims");
      if (d == 0) throw FormatError("zero dimension in '" + name + "'");
      n *= d;
      if (n > kMaxElems) throw FormatError("tensor '" + name + "' too large");
    }
    std::vector<T> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = static_cast<T>(io::get_f32(is, "payload"));
    out.emplace_back(std::move(name), Tensor<T>::from(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace terl::ndgrad
