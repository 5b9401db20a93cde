#pragma once

#include <cstdint>
#include <random>

namespace laic {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for (seed, stream, index). Row-level streams keep
/// generated data identical regardless of how rows are spread over threads.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t index = 0) {
  return std::mt19937_64(mix64(mix64(mix64(seed) ^ stream) ^ index));
}

}  // namespace laic
