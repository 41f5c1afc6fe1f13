#pragma once

#include <cstdint>
#include <random>

namespace uqevo {

// SplitMix64 finalizer. Used to derive independent RNG substreams from a
// single master seed so that e.g. round 17 of an evolution run draws from
// the same stream whether or not rounds 0..16 were replayed from a log.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(master);
  s = mix64(s ^ mix64(a ^ 0x632be59bd9b4e019ULL));
  s = mix64(s ^ mix64(b ^ 0x2545f4914f6cdd1dULL));
  s = mix64(s ^ mix64(c ^ 0x9e6c63d0a9c3aa17ULL));
  return s;
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t a = 0,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  return std::mt19937_64(derive_seed(master, a, b, c));
}

}  // namespace uqevo
