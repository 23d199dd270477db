#pragma once

// Little-endian primitives for the chunk and checkpoint formats.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "mstitch/common.hpp"

namespace mstitch::binio {

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParseError("truncated file while reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const std::string& what, std::size_t limit = 1u << 26) {
  const auto n = get<std::uint32_t>(in, what);
  if (n > limit) throw ParseError("implausible length for " + what);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw ParseError("truncated file while reading " + what);
  return s;
}

/// Reads and checks an 8-byte magic tag ("MSTCH01\0" style).
inline void expect_magic(std::istream& in, const char (&magic)[8], const std::string& path) {
  char found[8];
  if (!in.read(found, 8) || std::memcmp(found, magic, 8) != 0) {
    throw ParseError(path + ": not a " + std::string(magic) + " file (bad header magic)");
  }
}

}  // namespace mstitch::binio
