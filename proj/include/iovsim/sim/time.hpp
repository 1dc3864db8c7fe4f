#pragma once

#include <cstdint>

namespace iovsim::sim {

// Simulated time is integer picoseconds. Sub-nanosecond cost-model values
// (e.g. per-byte copy costs) stay exact integers, so identical runs produce
// identical timestamps on every platform.
using Ps = std::uint64_t;

constexpr Ps kPsPerNs = 1000;

constexpr double ps_to_ns(Ps t) { return static_cast<double>(t) / 1000.0; }

// Rounds to the nearest picosecond; ns inputs come from config files.
constexpr Ps ns_to_ps(double ns) {
  return static_cast<Ps>(ns * 1000.0 + 0.5);
}

}  // namespace iovsim::sim
