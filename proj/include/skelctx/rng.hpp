#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace skelctx {

// Deterministic seed derivation. Every random decision in the pipeline draws
// from an mt19937_64 seeded through these mixers, never from global state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t salt) {
  return splitmix64(master ^ splitmix64(salt));
}

// Independent stream for a named purpose, e.g. make_rng(seed, "masking", step).
inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view tag,
                                std::uint64_t index = 0) {
  return std::mt19937_64(mix_seed(mix_seed(master, hash_tag(tag)), index));
}

}  // namespace skelctx
