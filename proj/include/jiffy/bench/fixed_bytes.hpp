#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string_view>

namespace jiffy::bench {

// Fixed-width byte string. from_u64 writes big-endian into the last
// bytes, so byte order matches numeric order.
template <std::size_t N>
struct FixedBytes {
  std::array<unsigned char, N> bytes{};

  static FixedBytes from_u64(std::uint64_t v) {
    FixedBytes f;
    for (std::size_t i = 0; i < 8 && i < N; ++i)
      f.bytes[N - 1 - i] = static_cast<unsigned char>(v >> (8 * i));
    return f;
  }

  std::uint64_t to_u64() const {
    std::uint64_t v = 0;
    for (std::size_t i = N >= 8 ? N - 8 : 0; i < N; ++i) v = v << 8 | bytes[i];
    return v;
  }

  auto operator<=>(const FixedBytes&) const = default;
};

}  // namespace jiffy::bench

template <std::size_t N>
struct std::hash<jiffy::bench::FixedBytes<N>> {
  std::size_t operator()(const jiffy::bench::FixedBytes<N>& f) const noexcept {
    return std::hash<std::string_view>{}(
        std::string_view(reinterpret_cast<const char*>(f.bytes.data()), N));
  }
};
