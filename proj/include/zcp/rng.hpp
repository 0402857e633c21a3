#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace zcp {

// SplitMix64: small, seedable, portable. Every random decision in this
// codebase flows through it, so identical seeds reproduce identical runs on
// any platform. (std::uniform_int_distribution is implementation-defined and
// would break that guarantee.)
struct SplitMix64 {
  uint64_t state = 0;

  explicit SplitMix64(uint64_t seed = 0) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n). Multiply-shift reduction; bias is O(n / 2^64).
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

// FNV-1a over bytes. Stable across platforms, unlike std::hash.
uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ULL);

// Order-sensitive combination of a seed and a stream index; used to derive
// independent substreams (per bootstrap iteration, per item, per metric).
uint64_t mix64(uint64_t a, uint64_t b);

// 32 hex chars of content digest; cache keys and config fingerprints.
std::string digest128_hex(std::string_view bytes);

}  // namespace zcp
