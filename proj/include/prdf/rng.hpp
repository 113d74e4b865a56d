#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace prdf {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Named stream derivation: stream = hash(seed, purpose, example, restart).
/// Two streams with different purposes never share state, so the defender's
/// secret noise and the adversary's draws are decoupled by construction.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t example = 0,
                                 std::uint64_t restart = 0) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ detail::fnv1a(purpose));
  h = detail::splitmix64(h ^ example);
  h = detail::splitmix64(h ^ (restart * 0x9e3779b97f4a7c15ULL));
  return h;
}

inline Rng derive_stream(std::uint64_t seed, std::string_view purpose, std::uint64_t example = 0,
                         std::uint64_t restart = 0) {
  return Rng(stream_seed(seed, purpose, example, restart));
}

/// Splits off an independent child generator; advances the parent by one draw.
inline Rng fork(Rng& parent) { return Rng(detail::splitmix64(parent())); }

}  // namespace prdf
