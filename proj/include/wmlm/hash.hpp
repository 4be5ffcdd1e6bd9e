#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>

#include "wmlm/common.hpp"

namespace wmlm {

// 64-bit FNV-1a. Used for artifact content hashes; not cryptographic.
class Fnv1a {
 public:
  Fnv1a& update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Fnv1a& update(std::string_view s) { return update(s.data(), s.size()); }

  Fnv1a& update_u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    return update(b, 8);
  }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file for hashing: " + path);
  Fnv1a h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.digest();
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

inline std::uint64_t parse_hash_hex(const std::string& s) {
  if (s.size() != 16) throw ArtifactError("bad hash field: " + s);
  std::uint64_t h = 0;
  for (char c : s) {
    h <<= 4;
    if (c >= '0' && c <= '9') h |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') h |= static_cast<std::uint64_t>(c - 'a' + 10);
    else throw ArtifactError("bad hash field: " + s);
  }
  return h;
}

}  // namespace wmlm
