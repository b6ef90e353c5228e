#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace otcg {

using Rng = std::mt19937_64;

/// Child seed for a named stream: splitmix64 over the parent seed and an
/// FNV-1a hash of the tag.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = parent + 0x9e3779b97f4a7c15ULL * (h | 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// master -> {data, init, training, gp}; every random consumer draws from
/// exactly one of these streams so it can be replayed alone.
struct SeedHierarchy {
  std::uint64_t master = 0;

  std::uint64_t data() const { return derive_seed(master, "data"); }
  std::uint64_t init() const { return derive_seed(master, "init"); }
  std::uint64_t training() const { return derive_seed(master, "training"); }
  std::uint64_t gp() const { return derive_seed(master, "gp"); }
};

}  // namespace otcg
