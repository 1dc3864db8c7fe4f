#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "iovsim/lightiov/guest.hpp"  // GuestIoRequest / SubmitResult
#include "iovsim/mem/gpa_alloc.hpp"
#include "iovsim/nvme/controller.hpp"

namespace iovsim::baselines {

// One shadow NVMe queue pair living in a VM's pinned DRAM grant. The guest
// driver produces SQEs and bumps sq_tail; the poller consumes them and
// produces CQEs. Both sides run host-virtual (the grant is pinned and
// premapped), so nothing here traps. Indices are free-running; ring slots
// are index % depth and the CQ phase is derived from the wrap count.
struct ShadowQueue {
  std::int32_t vm = 0;
  int ssd = 0;  // poller slot of the controller this queue feeds
  std::uint64_t sq_hpa = 0;
  std::uint64_t cq_hpa = 0;
  std::uint32_t depth = 0;
  std::uint64_t lba_start = 0;  // applied by the poller, not the guest
  std::uint64_t lba_size = 0;
  std::uint32_t sq_tail = 0;  // guest producer (the shadow doorbell cell)
  std::uint32_t sq_head = 0;  // poller fetch cursor
  std::uint32_t cq_tail = 0;  // poller producer
  // shadow cid -> request tag; present exactly while the request is in flight
  std::map<std::uint16_t, std::uint64_t> tags;
  std::function<void()> on_complete;  // completion "interrupt" into the guest
};

// Dedicated host polling core(s), vhost style: sweeps every shadow SQ and
// every attached device CQ on a fixed cadence, converting guest submissions
// into commands on a private poll-mode queue pair per SSD. Data pages are
// the guest's own (premapped in the device DMA table), so the data path has
// zero exits and zero copies; the price is one injected interrupt per
// completion plus the cores this thread burns whether or not work exists.
class VhostPoller {
 public:
  struct Config {
    int cores = 1;  // per-item costs divide by this; burn scales with it
  };

  VhostPoller(sim::EventLoop& loop, mem::HostMemory& mem,
              telemetry::EventLedger& ledger, const telemetry::CostModel& costs,
              Config cfg);

  // Creates the poll-mode queue pair on `ctrl` (idempotent per controller)
  // and returns the slot to put in ShadowQueue::ssd.
  int attach_ssd(nvme::NvmeController& ctrl);

  // The queue object must outlive the poller's last sweep.
  void register_queue(ShadowQueue* q);

  // Recurring sweeps every max(work, tick) until stop().
  void start();
  void stop();
  bool running() const { return running_; }

  // One sweep at the current instant, no rescheduling; returns the number of
  // submissions converted. Accounting is identical to the recurring path.
  std::size_t tick() { return sweep(); }

  // Total core-picoseconds consumed by sweeps so far.
  std::uint64_t cycles() const { return cycles_; }

 private:
  struct Live {  // one converted, not-yet-completed command
    ShadowQueue* q;
    std::uint16_t shadow_cid;
    std::uint64_t tag;
    std::uint16_t sq_head_after;  // modulo value reported back in the CQE
  };
  struct Ssd {  // per-controller poll-mode queue pair
    nvme::NvmeController* ctrl;
    std::uint16_t qid;
    std::uint64_t hsq, hcq;
    std::uint32_t depth;
    std::uint32_t sq_tail = 0;
    std::uint32_t cq_head = 0;
    bool cq_phase = true;
    std::vector<std::uint16_t> free_cids;
    std::map<std::uint16_t, Live> live;  // host cid -> conversion record
  };

  std::size_t sweep();
  std::size_t reap(Ssd& ssd, sim::Ps& cursor);
  std::size_t scan(ShadowQueue& q, sim::Ps& cursor);
  void complete_shadow(ShadowQueue& q, std::uint16_t shadow_cid,
                       std::uint16_t sq_head_after, std::uint32_t result,
                       std::uint16_t status, sim::Ps at);
  void charge(sim::Ps t, std::int32_t vm, telemetry::EventKind kind,
              std::uint64_t bytes, std::uint64_t req);

  sim::EventLoop& loop_;
  mem::HostMemory& mem_;
  telemetry::EventLedger& ledger_;
  const telemetry::CostModel& costs_;
  Config cfg_;

  std::vector<Ssd> ssds_;
  std::map<const nvme::NvmeController*, int> slot_of_;
  std::vector<ShadowQueue*> queues_;

  bool running_ = false;
  std::uint64_t cycles_ = 0;
};

// Guest-side driver for one VM: a standard NVMe producer, except the rings
// and the doorbell cell sit in its own pinned DRAM and completions arrive by
// injected interrupt from the poller. The guest submits virtual LBAs; the
// poller relocates and bounds-checks them (isolation is backend-enforced,
// unlike the passthrough design where the guest's own checks suffice).
// Instances must stay at a stable address once init() has run: the poller
// keeps a pointer to the shadow queue.
class VhostVmDevice {
 public:
  struct Config {
    std::int32_t vm = 0;
    std::uint32_t queue_depth = 128;
    std::uint64_t lba_start = 0;
    std::uint64_t lba_size = 0;
    std::uint64_t dram_bytes = 4ULL << 20;
  };
  using CompletionFn =
      std::function<void(std::uint64_t tag, std::uint16_t status)>;

  VhostVmDevice(sim::EventLoop& loop, mem::HostMemory& mem,
                telemetry::EventLedger& ledger,
                const telemetry::CostModel& costs, mem::GpaRangeAllocator& gpa,
                nvme::NvmeController& ctrl, VhostPoller& poller, Config cfg);

  // Pins + premaps the DRAM grant, builds the shadow rings inside it, and
  // registers them with the poller.
  void init();

  // Writes an SQE and bumps the shadow doorbell: plain stores, no exit.
  // vlba is guest-relative; PRPs carry guest GPAs straight through.
  lightiov::SubmitResult submit(const lightiov::GuestIoRequest& req);

  void set_completion_handler(CompletionFn fn) { on_complete_ = std::move(fn); }

  std::uint64_t alloc_guest(std::uint64_t bytes);
  std::uint64_t guest_hpa(std::uint64_t gpa) const;
  std::uint32_t block_size() const { return ctrl_.block_size(); }
  std::uint64_t lba_capacity() const { return cfg_.lba_size; }
  std::size_t in_flight() const { return sq_.tags.size(); }
  std::int32_t vm() const { return cfg_.vm; }
  const mem::GpaRange& dram() const { return dram_; }

 private:
  void drain_cq();  // the poller's injected interrupt lands here

  sim::EventLoop& loop_;
  mem::HostMemory& mem_;
  telemetry::EventLedger& ledger_;
  const telemetry::CostModel& costs_;
  mem::GpaRangeAllocator& gpa_;
  nvme::NvmeController& ctrl_;
  VhostPoller& poller_;
  Config cfg_;

  mem::GpaRange dram_;
  std::uint64_t dram_hpa_ = 0;
  std::uint64_t guest_next_ = 0;

  ShadowQueue sq_;
  std::uint32_t cq_head_ = 0;  // free-running consumer cursor
  std::vector<std::uint16_t> free_cids_;
  std::vector<std::uint64_t> prp_page_;  // per-cid PRP list page, lazily built

  CompletionFn on_complete_;
};

}  // namespace iovsim::baselines
