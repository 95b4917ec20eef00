#pragma once

#include <cstdint>
#include <random>

namespace rmtdiff {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Seed for trial t of a run with the given master seed.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t t) noexcept {
  return detail::splitmix64(detail::splitmix64(master) ^ detail::splitmix64(t + 0x632be59bd9b4e019ull));
}

/// Seed for an auxiliary stream (e.g. split B) of trial t.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t t, std::uint64_t stream) noexcept {
  return detail::splitmix64(sub_seed(master, t) ^ detail::splitmix64(stream * 0xd1b54a32d192ed03ull + 1));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace rmtdiff
