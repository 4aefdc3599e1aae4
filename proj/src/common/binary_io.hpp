#pragma once

// Little-endian primitives for the weights and checkpoint files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "unroll/error.hpp"

namespace unroll::binary {

template <typename U>
void write_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw FormatError("unexpected end of binary file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline void write_i32(std::ostream& out, std::int32_t v) { write_le<std::uint32_t>(out, static_cast<std::uint32_t>(v)); }
inline std::int32_t read_i32(std::istream& in) { return static_cast<std::int32_t>(read_le<std::uint32_t>(in)); }
inline void write_i64(std::ostream& out, std::int64_t v) { write_le<std::uint64_t>(out, static_cast<std::uint64_t>(v)); }
inline std::int64_t read_i64(std::istream& in) { return static_cast<std::int64_t>(read_le<std::uint64_t>(in)); }
inline void write_f32(std::ostream& out, float v) { write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }
inline void write_f64(std::ostream& out, double v) { write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

inline void write_magic(std::ostream& out, const char (&magic)[6]) { out.write(magic, 5); }

inline void expect_magic(std::istream& in, const char (&magic)[6]) {
  char got[5];
  if (!in.read(got, 5) || std::memcmp(got, magic, 5) != 0)
    throw FormatError(std::string("missing section marker ") + magic);
}

}  // namespace unroll::binary
