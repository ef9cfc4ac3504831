#ifndef APA_HASH_HPP
#define APA_HASH_HPP

#include <cstdint>
#include <string>

namespace apa {

/// FNV-1a 64-bit over a byte buffer.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h);

/// Content hash of a file, "fnv1a64:<hex>"; throws io.not_found.
std::string hash_file(const std::string& path);

}  // namespace apa

#endif
