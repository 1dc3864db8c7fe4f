#include "iovsim/sim/rng.hpp"

namespace iovsim::sim {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Reject draws from the final partial bucket so every residue is equally
  // likely; expected retries < 2.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
  std::uint64_t x = next();
  while (x > limit) x = next();
  return x % n;
}

std::uint64_t Rng::mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace iovsim::sim
