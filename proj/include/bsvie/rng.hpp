#pragma once

#include <cstdint>
#include <random>

namespace bsvie {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for (seed, item, stream). The state depends only on
/// these three counters, so results do not depend on scheduling order.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t item, std::uint64_t stream) {
  const std::uint64_t key = splitmix64(splitmix64(splitmix64(seed) ^ item) ^ (stream * 0xd1b54a32d192ed03ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(item), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

namespace streams {
inline constexpr std::uint64_t brownian = 0;
inline constexpr std::uint64_t jumps = 1;
inline constexpr std::uint64_t control = 2;
inline constexpr std::uint64_t spot_check = 3;
}  // namespace streams

}  // namespace bsvie
