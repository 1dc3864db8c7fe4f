#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <vector>

#include "iovsim/lightiov/guest.hpp"  // GuestIoRequest / SubmitResult
#include "iovsim/mem/gpa_alloc.hpp"
#include "iovsim/nvme/controller.hpp"

namespace iovsim::baselines {

// Split-ring geometry, standard layout in guest shared memory.
struct VirtqDesc {
  std::uint64_t addr;
  std::uint32_t len;
  std::uint16_t flags;  // 1 = NEXT, 2 = WRITE (device writes the buffer)
  std::uint16_t next;
};
constexpr std::uint16_t kDescNext = 1;
constexpr std::uint16_t kDescWrite = 2;

constexpr std::uint32_t kBlkTIn = 0;   // device-to-guest read
constexpr std::uint32_t kBlkTOut = 1;  // guest-to-device write
constexpr std::uint8_t kBlkStatusOk = 0;
constexpr std::uint8_t kBlkStatusIoErr = 1;

// Para-virtual block device for one VM: a split virtqueue in guest memory, a
// trap-on-write kick, and a host-side backend that bounces payloads and
// drives a private NVMe queue pair. Per request the profile is one kick exit
// (amortizable over a batch), two data copies, and one injected completion —
// the §2.2/§3.1 shape the comparison rests on.
class VirtioVmDevice {
 public:
  struct Config {
    std::int32_t vm = 0;
    std::uint16_t ring_size = 128;
    std::uint64_t lba_start = 0;  // physical placement of the VM's image
    std::uint64_t lba_size = 0;
    std::uint64_t dram_bytes = 4ULL << 20;
  };
  using CompletionFn =
      std::function<void(std::uint64_t tag, std::uint16_t status)>;

  VirtioVmDevice(sim::EventLoop& loop, mem::HostMemory& mem,
                 telemetry::EventLedger& ledger,
                 const telemetry::CostModel& costs,
                 mem::GpaRangeAllocator& gpa, nvme::NvmeController& ctrl,
                 Config cfg);

  // Builds the rings in guest memory and creates the host-side queue pair.
  void init();

  // Queues descriptors without notifying the host. Returns kQueueFull when
  // fewer than 3 descriptors are free. vlba is guest-relative.
  lightiov::SubmitResult submit(const lightiov::GuestIoRequest& req);
  // The kick: one vm-exit covering everything queued since the last kick.
  void kick();

  void set_completion_handler(CompletionFn fn) { on_complete_ = std::move(fn); }

  std::uint64_t alloc_guest(std::uint64_t bytes);
  // Guest DRAM is identity-offset into one host range; drivers and the load
  // generator use this to fill and read payload buffers directly.
  std::uint64_t guest_hpa(std::uint64_t gpa) const;
  std::uint32_t block_size() const { return ctrl_.block_size(); }
  std::uint64_t lba_capacity() const { return cfg_.lba_size; }
  std::size_t in_flight() const { return in_flight_; }
  std::int32_t vm() const { return cfg_.vm; }
  const mem::GpaRange& dram() const { return dram_; }

 private:
  struct Pending {  // host-side per-command state
    std::uint64_t tag;
    std::uint16_t desc_head;
    bool write;
    std::uint64_t guest_data_gpa;
    std::uint64_t bytes;
    std::uint64_t bounce_hpa;
    std::uint64_t status_gpa;
  };

  void host_process_kick(std::uint16_t upto_idx);
  void host_reap();
  void finish(const Pending& p, std::uint8_t status);
  void guest_complete();
  std::uint16_t take_desc();
  // Record a cost event at instant t. Appends immediately when t is now,
  // otherwise defers so the ledger stays time-ordered.
  void charge(sim::Ps t, telemetry::EventKind kind, std::uint64_t bytes,
              std::uint64_t req);

  sim::EventLoop& loop_;
  mem::HostMemory& mem_;
  telemetry::EventLedger& ledger_;
  const telemetry::CostModel& costs_;
  mem::GpaRangeAllocator& gpa_;
  nvme::NvmeController& ctrl_;
  Config cfg_;

  mem::GpaRange dram_;
  std::uint64_t dram_hpa_ = 0;
  std::uint64_t guest_next_ = 0;

  // ring layout (GPAs)
  std::uint64_t desc_gpa_ = 0, avail_gpa_ = 0, used_gpa_ = 0;
  std::uint16_t avail_idx_ = 0;       // guest producer
  std::uint16_t used_seen_ = 0;       // guest consumer
  std::uint16_t host_avail_seen_ = 0;
  std::uint16_t used_idx_ = 0;        // host producer
  std::vector<std::uint16_t> free_descs_;
  std::uint16_t kicked_upto_ = 0;
  std::size_t in_flight_ = 0;

  // per-request slots, keyed by head descriptor id
  std::vector<std::uint64_t> header_gpa_, status_gpa_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> bounce_;  // hpa, bytes
  std::map<std::uint64_t, std::uint64_t> req_tag_;  // head desc -> tag

  // host-side queue pair
  std::uint16_t qid_ = 0;
  std::uint16_t vector_ = 0;
  std::uint64_t hsq_ = 0, hcq_ = 0;
  std::uint32_t hdepth_ = 0;
  std::uint32_t hsq_tail_ = 0;
  std::uint32_t hcq_head_ = 0;
  bool hcq_phase_ = true;
  std::vector<std::uint16_t> free_cids_;
  std::map<std::uint16_t, Pending> pending_;

  CompletionFn on_complete_;
};

}  // namespace iovsim::baselines
