#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace kpnet {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a per-stage seed from the root seed and a stage label.
constexpr std::uint64_t stage_seed(std::uint64_t root, std::string_view stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : stage) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix_seed(root ^ mix_seed(h));
}

constexpr std::uint64_t stage_seed(std::uint64_t root, std::uint64_t index) { return mix_seed(root ^ mix_seed(index + 1)); }

}  // namespace kpnet
