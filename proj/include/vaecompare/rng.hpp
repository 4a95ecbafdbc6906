#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace vaecompare {

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Folds a tuple of integers into one seed. Different tuples give unrelated
// streams, so adding a refit or permutation never perturbs earlier ones.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

// Stream tags used with derive_seed.
namespace tag {
inline constexpr std::uint64_t dataset1 = 1;
inline constexpr std::uint64_t dataset2 = 2;
inline constexpr std::uint64_t sample1 = 3;
inline constexpr std::uint64_t sample2 = 4;
inline constexpr std::uint64_t permute = 5;
inline constexpr std::uint64_t compare = 6;
inline constexpr std::uint64_t split = 7;
inline constexpr std::uint64_t validation = 8;
inline constexpr std::uint64_t init = 9;
inline constexpr std::uint64_t batches = 10;
}  // namespace tag

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace vaecompare
