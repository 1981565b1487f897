#pragma once
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "doa/error.hpp"

namespace doa {

// Little-endian binary writer over an ostream.
class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& os) : os_(os) {}

  void u8(std::uint8_t v) { raw(&v, 1); }
  void u16(std::uint16_t v) { uint(v, 2); }
  void u32(std::uint32_t v) { uint(v, 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) { raw(p, n); }
  void str(const std::string& s) { raw(s.data(), s.size()); }

 private:
  void uint(std::uint64_t v, int n) {
    std::uint8_t b[8];
    for (int i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    raw(b, static_cast<std::size_t>(n));
  }
  void raw(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os_) throw IoError("write failed");
  }
  std::ostream& os_;
};

// Little-endian binary reader over an istream.
class ByteReader {
 public:
  explicit ByteReader(std::istream& is) : is_(is) {}

  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(uint(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  void bytes(void* p, std::size_t n) { raw(p, n); }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

 private:
  std::uint64_t uint(int n) {
    std::uint8_t b[8];
    raw(b, static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
  }
  void raw(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (is_.gcount() != static_cast<std::streamsize>(n)) {
      throw IoError("unexpected end of file");
    }
  }
  std::istream& is_;
};

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  return is;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  auto os = open_output(path);
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!os) throw IoError("write failed: " + path);
}

// FNV-1a, used for config hashes embedded in reports.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace doa
