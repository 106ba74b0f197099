#pragma once

// Little-endian primitive I/O shared by the binary snapshot formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "msb/error.hpp"

namespace msb::binio {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

inline void write_i64(std::ostream& out, std::int64_t v) { write_u64(out, static_cast<std::uint64_t>(v)); }

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t count, std::string_view what) {
  in.read(dst, static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw DataError("unexpected end of file while reading " + std::string(what));
  }
}

inline std::uint32_t read_u32(std::istream& in, std::string_view what) {
  std::array<unsigned char, 4> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& in, std::string_view what) {
  std::array<unsigned char, 8> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::int64_t read_i64(std::istream& in, std::string_view what) {
  return static_cast<std::int64_t>(read_u64(in, what));
}

inline double read_f64(std::istream& in, std::string_view what) {
  return std::bit_cast<double>(read_u64(in, what));
}

inline void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (static_cast<std::size_t>(in.gcount()) != magic.size() || got != magic) {
    throw DataError(std::string(what) + ": bad magic bytes, expected \"" + std::string(magic) + "\"");
  }
}

inline void write_f64_block(std::ostream& out, const double* src, std::size_t count) {
  constexpr std::size_t chunk = 1 << 16;
  std::string buf;
  for (std::size_t off = 0; off < count; off += chunk) {
    const std::size_t m = std::min(chunk, count - off);
    buf.resize(m * 8);
    for (std::size_t i = 0; i < m; ++i) {
      const auto v = std::bit_cast<std::uint64_t>(src[off + i]);
      for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((v >> (8 * b)) & 0xFFu);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
}

inline void read_f64_block(std::istream& in, double* dst, std::size_t count, std::string_view what) {
  constexpr std::size_t chunk = 1 << 16;
  std::string buf;
  for (std::size_t off = 0; off < count; off += chunk) {
    const std::size_t m = std::min(chunk, count - off);
    buf.resize(m * 8);
    read_exact(in, buf.data(), buf.size(), what);
    for (std::size_t i = 0; i < m; ++i) {
      std::uint64_t v = 0;
      for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + b])) << (8 * b);
      dst[off + i] = std::bit_cast<double>(v);
    }
  }
}

}  // namespace msb::binio
