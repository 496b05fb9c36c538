#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace mvsketch {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// MurmurHash64A. Blocks are read little-endian regardless of host order so
// that hash values (and therefore sketch states) are portable.
inline std::uint64_t murmur64a(std::span<const std::uint8_t> data, std::uint64_t seed) {
  constexpr std::uint64_t m = 0xc6a4a7935bd1e995ULL;
  constexpr int r = 47;
  const std::size_t len = data.size();
  std::uint64_t h = seed ^ (len * m);

  std::size_t i = 0;
  for (; i + 8 <= len; i += 8) {
    std::uint64_t k = 0;
    for (int b = 7; b >= 0; --b) k = (k << 8) | data[i + b];
    k *= m;
    k ^= k >> r;
    k *= m;
    h ^= k;
    h *= m;
  }

  const std::size_t tail = len - i;
  if (tail > 0) {
    std::uint64_t k = 0;
    for (std::size_t b = tail; b-- > 0;) k = (k << 8) | data[i + b];
    h ^= k;
    h *= m;
  }

  h ^= h >> r;
  h *= m;
  h ^= h >> r;
  return h;
}

// Per-row hash seed derived from the sketch seed and a 0-based row index.
inline std::uint64_t row_seed(std::uint64_t seed, std::size_t row) {
  return splitmix64(seed ^ splitmix64(0x726f77ULL + static_cast<std::uint64_t>(row)));
}

// Multiply-shift range reduction of a 64-bit hash onto [0, n).
inline std::uint32_t reduce_range(std::uint64_t hash, std::uint32_t n) {
  return static_cast<std::uint32_t>((static_cast<unsigned __int128>(hash) * n) >> 64);
}

// Column of `key` in a row whose seed is `seed_for_row`.
inline std::uint32_t hash_column(std::span<const std::uint8_t> key, std::uint64_t seed_for_row,
                                 std::uint32_t cols) {
  return reduce_range(murmur64a(key, seed_for_row), cols);
}

}  // namespace mvsketch
