#pragma once

#include <cstdint>

#include "iovsim/sim/time.hpp"
#include "iovsim/telemetry/ledger.hpp"

namespace iovsim::telemetry {

// Every simulated-time charge in a run comes from this table. Values are
// picoseconds (see sim/time.hpp); config files accept nanoseconds.
struct CostModel {
  sim::Ps exit_ps = 5'000'000;       // VM exit / trap round trip
  sim::Ps fault_ps = 5'000'000;      // second-level page fault (first touch)
  sim::Ps copy_byte_ps = 200;        // software data copy, per byte
  sim::Ps doorbell_ps = 0;           // passthrough doorbell write (plain store)
  sim::Ps posted_ps = 0;             // posted interrupt delivery
  sim::Ps inject_ps = 5'000'000;     // injected interrupt (exit-class)
  sim::Ps tick_ps = 1'000'000;       // poller sweep floor / idle burn per tick
  sim::Ps scan_queue_ps = 100'000;   // poller: scanning one shadow queue
  sim::Ps poll_convert_ps = 2'000'000;   // poller: convert+submit one request
  sim::Ps poll_complete_ps = 1'500'000;  // poller: reap one completion
  sim::Ps service_a_ps = 5'000'000;  // device service: a + b * bytes
  sim::Ps service_b_byte_ps = 10;

  sim::Ps service(std::uint64_t bytes) const {
    return service_a_ps + service_b_byte_ps * bytes;
  }

  // Charge for one ledger event. poller_cycle is a CPU-accounting record,
  // never part of a request path, so it carries no per-request charge.
  sim::Ps cost(EventKind kind, std::uint64_t bytes) const;

  bool valid() const { return posted_ps <= inject_ps; }
};

}  // namespace iovsim::telemetry
