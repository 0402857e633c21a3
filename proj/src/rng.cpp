#include "zcp/rng.hpp"

#include <cstdio>

namespace zcp {

uint64_t fnv1a64(std::string_view bytes, uint64_t seed) {
  uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t mix64(uint64_t a, uint64_t b) {
  SplitMix64 g(a ^ (b * 0x9e3779b97f4a7c15ULL));
  return g.next();
}

std::string digest128_hex(std::string_view bytes) {
  uint64_t h1 = fnv1a64(bytes);
  uint64_t h2 = fnv1a64(bytes, h1 ^ 0x9e3779b97f4a7c15ULL);
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx",
                static_cast<unsigned long long>(h1),
                static_cast<unsigned long long>(h2));
  return buf;
}

}  // namespace zcp
