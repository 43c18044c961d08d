#pragma once

#include <cstdint>
#include <random>

namespace hgseg {

// All randomness in the project flows through explicitly seeded engines.
using Rng = std::mt19937_64;

inline uint64_t mix_seed(uint64_t base, uint64_t a, uint64_t b = 0) {
  // splitmix64-style mixing so derived streams are decorrelated
  uint64_t z = base + 0x9e3779b97f4a7c15ull * (a + 1) + 0xbf58476d1ce4e5b9ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace hgseg
