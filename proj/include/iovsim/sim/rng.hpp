#pragma once

#include <cstdint>
#include <random>

namespace iovsim::sim {

// Deterministic RNG wrapper. mt19937_64 output is pinned by the standard;
// std::uniform_int_distribution is not, so bounded draws use our own
// reduction. Runs must be byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // Unbiased draw in [0, n) via rejection sampling on the top bits.
  std::uint64_t below(std::uint64_t n);

  // [0, 1) with 53 bits of precision.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // splitmix64 finalizer; used to derive independent substream seeds.
  static std::uint64_t mix(std::uint64_t x);
  static std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
    return mix(a + 0x9e3779b97f4a7c15ULL * (b + 1));
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace iovsim::sim
