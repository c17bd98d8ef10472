#pragma once

#include <cstdint>
#include <random>

namespace coact {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective scramble of 64-bit values.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based child seed for item `index` of `stream` under `root`.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) {
  return mix64(mix64(mix64(root) ^ stream) ^ index);
}

}  // namespace coact
