#include "apa/hash.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "apa/error.hpp"

namespace apa {

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error::io("io.not_found", "cannot open file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    std::streamsize n = in.gcount();
    if (n > 0) h = fnv1a64(buf.data(), static_cast<std::size_t>(n), h);
  }
  return "fnv1a64:" + hash_hex(h);
}

}  // namespace apa
