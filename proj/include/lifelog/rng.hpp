#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace lifelog {

using Rng = std::mt19937_64;

// Generator whose state depends only on the listed stream keys, e.g.
// (seed, tree index) or (seed, class index).
inline Rng make_rng(std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(keys.size() * 2);
  for (std::uint64_t k : keys) {
    words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// FNV-1a, stable across platforms (std::hash is not).
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace lifelog
