#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "vldac/errors.hpp"

// Little-endian binary primitives for the checkpoint format. Explicit byte
// order so files round-trip across machines.

namespace vldac::ser {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw CheckpointError("unexpected end of stream reading u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_i64(std::ostream& os, std::int64_t v) { write_u64(os, static_cast<std::uint64_t>(v)); }
inline std::int64_t read_i64(std::istream& is) { return static_cast<std::int64_t>(read_u64(is)); }

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw CheckpointError("unexpected end of stream reading u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline std::uint8_t read_u8(std::istream& is) {
  int c = is.get();
  if (c == EOF) throw CheckpointError("unexpected end of stream reading u8");
  return static_cast<std::uint8_t>(c);
}

// Doubles go through their IEEE-754 bit pattern, so round-trips are bit-exact.
inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  std::uint64_t n = read_u64(is);
  if (n > (1ull << 32)) throw CheckpointError("implausible string length in stream");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("unexpected end of stream reading string");
  return s;
}

inline void write_vec_f64(std::ostream& os, const std::vector<double>& v) {
  write_u64(os, v.size());
  for (double x : v) write_f64(os, x);
}

inline std::vector<double> read_vec_f64(std::istream& is) {
  std::uint64_t n = read_u64(is);
  if (n > (1ull << 32)) throw CheckpointError("implausible vector length in stream");
  std::vector<double> v(n);
  for (auto& x : v) x = read_f64(is);
  return v;
}

inline void write_vec_i32(std::ostream& os, const std::vector<int>& v) {
  write_u64(os, v.size());
  for (int x : v) write_u32(os, static_cast<std::uint32_t>(x));
}

inline std::vector<int> read_vec_i32(std::istream& is) {
  std::uint64_t n = read_u64(is);
  if (n > (1ull << 32)) throw CheckpointError("implausible vector length in stream");
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(read_u32(is));
  return v;
}

inline void write_vec_u8(std::ostream& os, const std::vector<std::uint8_t>& v) {
  write_u64(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
}

inline std::vector<std::uint8_t> read_vec_u8(std::istream& is) {
  std::uint64_t n = read_u64(is);
  if (n > (1ull << 32)) throw CheckpointError("implausible vector length in stream");
  std::vector<std::uint8_t> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n));
  if (!is && n > 0) throw CheckpointError("unexpected end of stream reading bytes");
  return v;
}

}  // namespace vldac::ser
