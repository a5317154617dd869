#pragma once

#include <cstdint>
#include <initializer_list>

namespace rdcm {

// Deterministic seed mixing (splitmix64 finalizer) so that sub-streams for
// domains, epochs and folds never collide with the run seed itself.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> salts) {
  std::uint64_t s = mix_seed(base);
  for (std::uint64_t v : salts) s = mix_seed(s ^ mix_seed(v + 0x632be59bd9b4e019ULL));
  return s;
}

}  // namespace rdcm
