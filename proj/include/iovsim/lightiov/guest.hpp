#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "iovsim/lightiov/host.hpp"

namespace iovsim::lightiov {

struct GuestIoRequest {
  bool write = false;
  std::uint64_t vlba = 0;  // guest-relative, 0-based
  std::uint32_t blocks = 1;
  std::uint64_t buffer_gpa = 0;
  std::uint64_t tag = 0;  // caller correlation id
};

enum class SubmitResult { kOk, kRangeError, kPrpError, kQueueFull };

// Frontend driver for one VM. init() walks the whole control plane
// (config space, bar0 bring-up, IDENTIFY, SET_FEATURES, CREATE per queue) —
// every step there costs a vm-exit. After that the data path runs purely on
// the mapped CMB rings and doorbell pages: submit() rewrites vlba by
// lba_start after local bounds checks, and completions arrive by posted
// interrupt into poll_completions(). Instances must stay at a stable address
// once init() ran (the ISR closures capture `this`).
class GuestDriver {
 public:
  using CompletionFn =
      std::function<void(std::uint64_t tag, std::uint16_t status)>;

  GuestDriver(LightiovHost& host, std::int32_t vm) : host_(host), vm_(vm) {}

  // Returns the number of queues armed. Throws on admin failure (message
  // carries the NVMe status) and on unprovisioned VMs.
  std::uint32_t init(std::uint32_t want_queues = 0);  // 0 = all granted

  SubmitResult submit(std::uint32_t queue, const GuestIoRequest& req,
                      std::uint16_t* cid_out = nullptr);
  // Drains ready CQ entries by phase bit; advances the CQ doorbell once if
  // anything was consumed. Safe to call spuriously.
  std::vector<std::pair<std::uint64_t, std::uint16_t>> poll_completions(
      std::uint32_t queue);

  // Invoked (per completed request) from the posted-interrupt ISR.
  void set_completion_handler(CompletionFn fn) { on_complete_ = std::move(fn); }

  // Page-aligned bump allocator over the VM's own DRAM grant.
  std::uint64_t alloc_guest(std::uint64_t bytes);

  bool initialized() const { return initialized_; }
  std::uint64_t lba_start() const { return lba_start_; }
  std::uint64_t lba_size() const { return lba_size_; }
  std::uint32_t block_size() const { return block_size_; }
  std::uint32_t n_queues() const { return static_cast<std::uint32_t>(queues_.size()); }
  std::uint32_t queue_depth() const { return queue_depth_; }
  std::size_t outstanding(std::uint32_t queue) const {
    return queues_.at(queue).outstanding.size();
  }
  std::int32_t vm() const { return vm_; }

 private:
  struct QueueState {
    std::uint64_t sq_gpa = 0, cq_gpa = 0, db_gpa = 0;
    std::uint32_t depth = 0;
    std::uint32_t sq_tail = 0;
    std::uint32_t cq_head = 0;
    bool phase = true;
    std::map<std::uint16_t, std::uint64_t> outstanding;  // cid -> tag
    std::vector<std::uint16_t> free_cids;
    std::vector<std::uint64_t> prp_page;  // per-cid PRP list page, lazy
  };

  nvme::Completion admin(nvme::Command cmd);
  std::uint64_t reg_read(std::uint64_t offset, std::uint32_t width);
  void reg_write(std::uint64_t offset, std::uint64_t value, std::uint32_t width);

  LightiovHost& host_;
  std::int32_t vm_;
  bool initialized_ = false;

  std::uint64_t gpa_next_ = 0, gpa_end_ = 0;
  std::uint64_t gpa_base_ = 0, gpa_size_ = 0;  // grant, for PRP checks

  std::uint64_t asq_gpa_ = 0, acq_gpa_ = 0;
  std::uint32_t asq_depth_ = 0, acq_depth_ = 0;
  std::uint32_t asq_tail_ = 0, acq_head_ = 0;
  bool acq_phase_ = true;
  std::uint16_t admin_cid_ = 0;

  std::uint64_t lba_start_ = 0, lba_size_ = 0;
  std::uint32_t block_size_ = 0;
  std::uint32_t queue_depth_ = 0;
  std::uint32_t max_transfer_bytes_ = 0;
  std::vector<QueueState> queues_;
  CompletionFn on_complete_;
};

}  // namespace iovsim::lightiov
