#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace bbridge {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable 64-bit hash of a string (FNV-1a); used only for seed splitting.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for one document, independent of its position in the corpus.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view id,
                                 std::uint64_t salt = 0) {
  return splitmix64(splitmix64(seed ^ stable_hash(id)) + salt);
}

}  // namespace bbridge
