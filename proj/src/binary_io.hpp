#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string_view>

#include "densewarp/error.hpp"

namespace densewarp::detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xffu), static_cast<char>((v >> 8) & 0xffu),
                              static_cast<char>((v >> 16) & 0xffu), static_cast<char>((v >> 24) & 0xffu)};
  out.write(b.data(), b.size());
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), b.size());
  if (!in) throw Error(ErrorCode::kFormat, "unexpected end of stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

inline void put_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), 4); }

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::array<char, 4> b{};
  in.read(b.data(), b.size());
  if (!in || std::string_view(b.data(), b.size()) != magic) {
    throw Error(ErrorCode::kFormat, "bad magic, expected " + std::string(magic));
  }
}

}  // namespace densewarp::detail
