#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "iovsim/mem/dma_table.hpp"
#include "iovsim/mem/host_memory.hpp"
#include "iovsim/mem/irq.hpp"
#include "iovsim/nvme/backing_store.hpp"
#include "iovsim/nvme/defs.hpp"
#include "iovsim/sim/event_loop.hpp"
#include "iovsim/telemetry/cost_model.hpp"
#include "iovsim/telemetry/ledger.hpp"

namespace iovsim::nvme {

struct ControllerConfig {
  int ctrl_id = 0;
  std::uint16_t max_io_qpairs = kMaxIoQpairs;
  std::uint32_t block_size = 4096;
  std::uint64_t total_blocks = 0;
  std::uint64_t cmb_bytes = 1ULL << 30;
  bool fetch_log_enabled = false;
};

// Ring base addresses are host-physical: queues are created by the host
// driver or the hypervisor, never directly by a guest, so ring accesses do
// not pass through the DMA remap table. Data PRPs do.
struct SqState {
  std::uint16_t qid = 0;
  std::uint32_t depth = 0;
  std::uint64_t base = 0;
  std::uint16_t cqid = 0;
  std::uint32_t tail = 0;  // producer index, set via doorbell
  std::uint32_t head = 0;  // device fetch cursor
  std::uint64_t fetched_abs = 0;
  bool fatal = false;      // e.g. out-of-range doorbell value
  bool in_ready = false;
  std::int32_t owner = telemetry::kHostVm;
};

struct CqState {
  std::uint16_t qid = 0;
  std::uint32_t depth = 0;
  std::uint64_t base = 0;
  std::uint32_t tail = 0;  // device producer index
  std::uint32_t head = 0;  // consumer index, set via doorbell
  bool phase = true;       // value the device writes on the current pass
  std::uint64_t posted_abs = 0;
  std::uint64_t released_abs = 0;
  std::uint64_t deferred_total = 0;  // completions that had to wait for space
  std::uint16_t vector = 0;
  bool has_vector = false;
  bool irq_pending = false;
  bool fatal = false;
  std::int32_t owner = telemetry::kHostVm;
  // Completions carry their request tag for ledger attribution.
  std::deque<std::pair<Completion, std::uint64_t>> parked;

  // The device tracks occupancy internally (it knows what it posted and the
  // released head), so it may fill all `depth` slots.
  std::uint64_t occupancy() const { return posted_abs - released_abs; }
};

struct IoResult {
  std::uint16_t status = kSuccess;
  std::uint64_t bytes_moved = 0;
  std::uint32_t prp_list_entries = 0;
};

struct FetchRecord {
  std::uint16_t sqid;
  std::uint16_t cid;
  std::uint8_t opcode;
  std::uint64_t slba;
  std::uint32_t blocks;
};

// One simulated NVMe controller: admin + I/O queue pairs, per-command
// round-robin arbitration across ready SQs, a serial service engine with
// affine service time, a controller memory buffer, and per-device DMA and
// interrupt-remap tables. Driven entirely by the event loop.
class NvmeController {
 public:
  NvmeController(sim::EventLoop& loop, mem::HostMemory& mem,
                 telemetry::EventLedger& ledger, const telemetry::CostModel& costs,
                 std::unique_ptr<BackingStore> store, ControllerConfig cfg);

  // --- bring-up (host driver side) ---
  void set_admin_queues(std::uint64_t asq_hpa, std::uint64_t acq_hpa,
                        std::uint32_t depth);
  void enable();
  bool ready() const { return enabled_; }

  // Appends to the real admin SQ, rings the doorbell, reaps the completion
  // from the admin CQ. Admin commands execute synchronously in sim time.
  Completion admin_execute(const Command& cmd);

  // --- doorbells ---
  // One page per qid inside the doorbell window: +0 SQ tail, +4 CQ head.
  std::uint64_t doorbell_base() const { return db_base_; }
  std::uint64_t doorbell_hpa(std::uint16_t qid) const {
    return db_base_ + static_cast<std::uint64_t>(qid) * mem::kPageSize;
  }
  void ring_sq_doorbell(std::uint16_t qid, std::uint32_t value);
  void ring_cq_doorbell(std::uint16_t qid, std::uint32_t value);

  // --- CMB ---
  std::uint64_t cmb_base() const { return cmb_base_; }
  std::uint64_t cmb_size() const { return cfg_.cmb_bytes; }
  std::uint64_t cmb_alloc(std::uint64_t bytes);  // page-aligned bump allocator

  // --- per-device tables ---
  mem::DmaTable& dma() { return dma_; }
  mem::InterruptRemapTable& irt() { return irt_; }
  void set_host_isr(std::uint16_t vector, std::function<void()> isr);

  // --- namespace ---
  BackingStore& store() { return *store_; }
  std::uint32_t block_size() const { return cfg_.block_size; }
  std::uint64_t total_blocks() const { return cfg_.total_blocks; }

  // --- helpers for drivers ---
  std::uint16_t alloc_qid();
  void free_qid(std::uint16_t qid);
  std::uint32_t free_qpairs() const {
    return cfg_.max_io_qpairs - (next_qid_ - 1) +
           static_cast<std::uint32_t>(free_qids_.size());
  }
  void set_queue_owner(std::uint16_t qid, std::int32_t vm);
  // Telemetry only: resolves (sqid, cid) to a request tag for the ledger.
  std::function<std::uint64_t(std::uint16_t, std::uint16_t)> req_lookup;

  // --- introspection ---
  const SqState* sq(std::uint16_t qid) const;
  const CqState* cq(std::uint16_t qid) const;
  std::size_t io_sq_count() const;
  const std::vector<FetchRecord>& fetch_log() const { return fetch_log_; }
  bool quiescent_for_owner(std::int32_t vm) const;
  bool idle() const { return !busy_; }
  int id() const { return cfg_.ctrl_id; }
  const ControllerConfig& config() const { return cfg_; }

 private:
  void process_admin();
  Completion execute_admin(const Command& cmd);
  void try_start();
  void complete_command(std::uint16_t sqid, const Command& cmd, std::uint64_t req);
  void post_completion(CqState& cq, Completion c, std::uint64_t req);
  void raise_for_cq(CqState& cq, std::uint64_t req);
  IoResult execute_io(const Command& cmd, std::int32_t owner, std::uint64_t req);
  std::uint16_t gather_pages(const Command& cmd, std::uint64_t bytes,
                             std::vector<std::pair<std::uint64_t, std::uint32_t>>& segs,
                             std::uint32_t& list_entries, std::int32_t owner,
                             std::uint64_t req);

  sim::EventLoop& loop_;
  mem::HostMemory& mem_;
  telemetry::EventLedger& ledger_;
  const telemetry::CostModel& costs_;
  std::unique_ptr<BackingStore> store_;
  ControllerConfig cfg_;

  mem::DmaTable dma_;
  mem::InterruptRemapTable irt_;
  std::map<std::uint16_t, std::function<void()>> host_isr_;

  bool enabled_ = false;
  std::uint64_t asq_ = 0, acq_ = 0;
  std::uint32_t admin_depth_ = 0;
  std::uint32_t asq_tail_ = 0;       // host-side producer cursor
  std::uint32_t acq_reap_head_ = 0;  // host-side reap cursor
  bool acq_reap_phase_ = true;

  std::map<std::uint16_t, SqState> sqs_;  // io queues only
  std::map<std::uint16_t, CqState> cqs_;
  SqState admin_sq_;
  CqState admin_cq_;

  std::uint64_t db_base_ = 0;
  std::uint64_t cmb_base_ = 0;
  std::uint64_t cmb_next_ = 0;

  std::deque<std::uint16_t> arb_;
  bool busy_ = false;
  std::int32_t in_service_owner_ = telemetry::kHostVm;
  std::uint16_t in_service_sqid_ = 0;

  std::vector<std::uint16_t> free_qids_;
  std::uint16_t next_qid_ = 1;

  std::vector<FetchRecord> fetch_log_;
};

}  // namespace iovsim::nvme
