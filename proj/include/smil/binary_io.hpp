#pragma once

// Byte-order explicit readers/writers shared by the on-disk formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace smil::io {

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

inline std::uint64_t tell(std::istream& in) {
  auto pos = in.tellg();
  return pos < 0 ? 0 : static_cast<std::uint64_t>(pos);
}

inline void read_bytes(std::istream& in, char* dst, std::size_t n, const char* what) {
  const auto at = tell(in);
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string("truncated input reading ") + what, at + static_cast<std::uint64_t>(in.gcount()));
  }
}

template <typename T>
T read_le(std::istream& in, const char* what) {
  unsigned char buf[sizeof(T)];
  read_bytes(in, reinterpret_cast<char*>(buf), sizeof(T), what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (sizeof(T) == 8) {
    return std::bit_cast<T>(v);
  } else {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>;
    return std::bit_cast<T>(static_cast<U>(v));
  }
}

template <typename T>
T read_be(std::istream& in, const char* what) {
  unsigned char buf[sizeof(T)];
  read_bytes(in, reinterpret_cast<char*>(buf), sizeof(T), what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v = (v << 8) | buf[i];
  return static_cast<T>(v);
}

template <typename T>
void write_le(std::ostream& out, T value) {
  std::uint64_t v;
  if constexpr (sizeof(T) == 8) {
    v = std::bit_cast<std::uint64_t>(value);
  } else {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>;
    v = std::bit_cast<U>(value);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
void write_be(std::ostream& out, T value) {
  const auto v = static_cast<std::uint64_t>(value);
  for (std::size_t i = sizeof(T); i-- > 0;) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void expect_magic(std::istream& in, const std::string& magic) {
  std::string got(magic.size(), '\0');
  const auto at = tell(in);
  read_bytes(in, got.data(), magic.size(), "magic");
  if (got != magic) throw FormatError("bad magic, expected \"" + magic + "\"", at);
}

}  // namespace smil::io
