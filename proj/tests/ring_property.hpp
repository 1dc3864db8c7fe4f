#pragma once

// Randomized single-qpair protocol exercise shared by the unit suite and the
// conformance criterion. A shadow host model submits reads in random bursts,
// reaps by phase bit with deliberately lazy CQ-head doorbells (so the device
// has to park completions), and checks after every step that nothing is
// lost, duplicated, reordered, or phase-torn.

#include <cstdint>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>

#include "iovsim/nvme/controller.hpp"
#include "iovsim/sim/rng.hpp"

namespace ringprop {

struct Stats {
  std::uint64_t submitted = 0;
  std::uint64_t completed = 0;
  std::uint64_t cq_wraps = 0;
  std::uint64_t deferred = 0;  // completions the device had to park
};

// Throws std::runtime_error on any protocol violation.
inline Stats drive(std::uint64_t seed, std::uint64_t ops,
                   std::uint32_t sq_depth, std::uint32_t cq_depth) {
  using namespace iovsim;
  namespace nv = iovsim::nvme;

  sim::EventLoop loop;
  mem::HostMemory memry;
  telemetry::EventLedger led;
  telemetry::CostModel costs;
  nv::ControllerConfig cfg;
  cfg.total_blocks = 4096;
  nv::NvmeController ctrl(loop, memry, led, costs,
                          std::make_unique<nv::MemStore>(4096), cfg);
  ctrl.set_admin_queues(memry.alloc(32 * nv::kSqeBytes),
                        memry.alloc(32 * nv::kCqeBytes), 32);
  ctrl.enable();

  const std::uint16_t qid = ctrl.alloc_qid();
  const std::uint64_t sq_hpa = memry.alloc(sq_depth * nv::kSqeBytes);
  const std::uint64_t cq_hpa = memry.alloc(cq_depth * nv::kCqeBytes);
  {
    nv::Command c;
    c.opcode = nv::kCreateIoCq;
    c.prp1 = cq_hpa;
    c.cdw10 = qid | ((cq_depth - 1) << 16);
    c.cdw11 = 0x1;  // physically contiguous, no interrupts: polled CQ
    if (!ctrl.admin_execute(c).ok()) throw std::runtime_error("create cq");
    c = nv::Command{};
    c.opcode = nv::kCreateIoSq;
    c.prp1 = sq_hpa;
    c.cdw10 = qid | ((sq_depth - 1) << 16);
    c.cdw11 = (static_cast<std::uint32_t>(qid) << 16) | 0x1;
    if (!ctrl.admin_execute(c).ok()) throw std::runtime_error("create sq");
  }

  const std::uint64_t buf = memry.alloc(mem::kPageSize);
  sim::Rng rng(seed);
  auto fail = [](const std::string& what) {
    throw std::runtime_error("ring property violated: " + what);
  };

  Stats st;
  std::uint64_t submit_abs = 0;  // producer cursor
  std::uint64_t seen_abs = 0;    // local reap cursor
  std::uint64_t released_abs = 0;  // last CQ-head doorbell
  std::set<std::uint16_t> outstanding;
  const std::uint64_t limit =
      std::min(sq_depth, cq_depth) - 1;  // producer in-flight rule

  auto reap_ready = [&]() {
    while (seen_abs < submit_abs) {
      std::uint8_t raw[nv::kCqeBytes];
      memry.read(cq_hpa + (seen_abs % cq_depth) * nv::kCqeBytes, raw);
      const nv::Completion c = nv::Completion::decode(raw);
      const bool expected_phase = ((seen_abs / cq_depth) % 2) == 0;
      if (c.phase != expected_phase) break;  // slot not produced yet
      if (c.cid != static_cast<std::uint16_t>(seen_abs % 65536))
        fail("completion out of order");
      if (!outstanding.erase(c.cid)) fail("unknown or duplicate cid");
      if (c.status != nv::kSuccess) fail("I/O status " + std::to_string(c.status));
      if (c.sqid != qid) fail("wrong sqid");
      ++seen_abs;
      ++st.completed;
      // The head doorbell carries a mod-depth slot index, so letting the
      // unreleased lag reach a full ring would alias with "no change".
      // Real drivers release as they consume; we release at the last
      // unambiguous point to keep maximum pressure on the parking path.
      if (seen_abs - released_abs == cq_depth - 1) {
        released_abs = seen_abs;
        ctrl.ring_cq_doorbell(
            qid, static_cast<std::uint32_t>(released_abs % cq_depth));
      }
    }
  };

  while (st.completed < ops) {
    const std::uint64_t action = rng.below(100);
    if (action < 45 && submit_abs < ops) {
      std::uint64_t batch = 1 + rng.below(4);
      bool wrote = false;
      while (batch-- && submit_abs < ops &&
             submit_abs - seen_abs < limit) {
        nv::Command c;
        c.opcode = nv::kRead;
        c.cid = static_cast<std::uint16_t>(submit_abs % 65536);
        c.prp1 = mem::host_iova(buf);
        c.set_slba(rng.below(cfg.total_blocks));
        c.set_nlb(0);
        std::uint8_t raw[nv::kSqeBytes];
        c.encode(raw);
        memry.write(sq_hpa + (submit_abs % sq_depth) * nv::kSqeBytes, raw);
        if (!outstanding.insert(c.cid).second) fail("cid reuse while live");
        ++submit_abs;
        ++st.submitted;
        wrote = true;
      }
      if (wrote)
        ctrl.ring_sq_doorbell(qid,
                              static_cast<std::uint32_t>(submit_abs % sq_depth));
    } else if (action < 75) {
      reap_ready();
    } else if (action < 85) {
      released_abs = seen_abs;
      ctrl.ring_cq_doorbell(qid,
                            static_cast<std::uint32_t>(released_abs % cq_depth));
    } else {
      const std::uint64_t stop = loop.executed() + 1 + rng.below(32);
      loop.run_until([&] { return loop.executed() >= stop; });
    }

    if (submit_abs == ops && seen_abs == submit_abs) break;
  }

  // Tail drain: parked completions surface only as CQ-head doorbells open
  // space, so alternate run / reap / release until quiescent.
  for (int spin = 0; st.completed < ops; ++spin) {
    if (spin > 1000) fail("stalled with outstanding commands");
    loop.run();
    reap_ready();
    released_abs = seen_abs;
    ctrl.ring_cq_doorbell(qid,
                          static_cast<std::uint32_t>(released_abs % cq_depth));
  }
  loop.run();
  released_abs = seen_abs;
  ctrl.ring_cq_doorbell(qid,
                        static_cast<std::uint32_t>(released_abs % cq_depth));

  if (st.completed != ops || !outstanding.empty())
    fail("conservation: " + std::to_string(st.completed) + " of " +
         std::to_string(ops));
  const auto* sq = ctrl.sq(qid);
  const auto* cq = ctrl.cq(qid);
  if (!sq || !cq || sq->fatal || cq->fatal) fail("queue entered fatal state");
  if (cq->occupancy() != seen_abs - released_abs) fail("occupancy mismatch");
  st.cq_wraps = seen_abs / cq_depth;
  st.deferred = cq->deferred_total;
  return st;
}

}  // namespace ringprop
