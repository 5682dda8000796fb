#pragma once

#include <cstdint>
#include <string_view>

namespace vldac {

// FNV-1a, 64-bit. Stable across platforms; used for config hashes and
// observation fingerprints, not for anything adversarial.
inline std::uint64_t fnv1a64(const void* bytes, size_t n, std::uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

}  // namespace vldac
