#pragma once

#include <cstdint>
#include <string>

namespace vofm {

// FNV-1a 64-bit; used for content digests of configs, datasets and models.
struct Fnv1a {
  uint64_t state = 0xcbf29ce484222325ULL;

  void update(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      state ^= p[i];
      state *= 0x100000001b3ULL;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }

  std::string hex() const {
    static const char* d = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) out[15 - i] = d[(state >> (4 * i)) & 0xf];
    return out;
  }
};

inline std::string digest_hex(const void* data, size_t len) {
  Fnv1a f;
  f.update(data, len);
  return f.hex();
}

inline std::string digest_hex(const std::string& s) {
  return digest_hex(s.data(), s.size());
}

}  // namespace vofm
