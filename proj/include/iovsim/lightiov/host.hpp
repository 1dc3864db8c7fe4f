#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "iovsim/mem/gpa_alloc.hpp"
#include "iovsim/mem/host_memory.hpp"
#include "iovsim/mem/second_level.hpp"
#include "iovsim/nvme/controller.hpp"
#include "iovsim/sim/event_loop.hpp"
#include "iovsim/telemetry/cost_model.hpp"
#include "iovsim/telemetry/ledger.hpp"

namespace iovsim::lightiov {

// Guest-physical bases of the passthrough windows. GPA spaces are per-VM, so
// every VM sees its windows at the same addresses; only DRAM grants need
// global disjointness, because those are the pages guests put into PRPs and
// the per-device DMA table is shared.
constexpr std::uint64_t kGuestCmbGpa = 1ULL << 40;
constexpr std::uint64_t kGuestDbGpa = 1ULL << 41;

// Bar0 register cells. CMBLOC/CMBSZ deviate from the standard packed
// encodings: they are plain 8-byte cells holding the window GPA and byte
// size, which the guest would otherwise have to reconstruct from BIR+offset.
constexpr std::uint64_t kRegCap = 0x00;        // RO, 8B
constexpr std::uint64_t kRegVs = 0x08;         // RO, 4B
constexpr std::uint64_t kRegCc = 0x14;         // RW, 4B
constexpr std::uint64_t kRegCsts = 0x1c;       // RO, 4B
constexpr std::uint64_t kRegAqa = 0x24;        // RW, 4B
constexpr std::uint64_t kRegAsq = 0x28;        // RW, 8B
constexpr std::uint64_t kRegAcq = 0x30;        // RW, 8B
constexpr std::uint64_t kRegCmbLoc = 0x38;     // RO, 8B
constexpr std::uint64_t kRegCmbSz = 0x40;      // RO, 8B
constexpr std::uint64_t kRegAdminSqDb = 0x1000;
constexpr std::uint64_t kRegAdminCqDb = 0x1004;
constexpr std::uint64_t kBar0Bytes = 0x2000;

// CMB metadata page layout (byte offsets inside window page 0). The backend
// stores the LBA bounds here and a directory of per-queue ring/doorbell GPAs
// so the frontend needs no further emulated reads after CREATE.
constexpr std::uint64_t kMetaLbaStart = 0;
constexpr std::uint64_t kMetaLbaSize = 8;
constexpr std::uint64_t kMetaNQueues = 16;
constexpr std::uint64_t kMetaQueueDepth = 24;
constexpr std::uint64_t kMetaDirectory = 32;
constexpr std::uint64_t kMetaDirStride = 32;  // sq_gpa, cq_gpa, db_gpa, pad

// Virtual-controller IDENTIFY carries the grant size in an otherwise
// reserved u16 cell so the guest can size its queue table in one read.
constexpr std::uint32_t kIdCtrlMaxQueuesOffset = 520;

enum class Region { kPcieConfig, kBar0 };

struct ProvisionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProvisionOptions {
  std::uint32_t queue_depth = 128;
  std::uint64_t dram_bytes = 4ULL << 20;
};

struct VmResources {
  std::int32_t vm = 0;
  int ctrl = 0;
  std::vector<std::uint16_t> qids;     // physical qids, grant order
  std::vector<std::uint16_t> vectors;  // physical vectors, one per CQ
  std::uint32_t queue_depth = 0;
  std::vector<std::uint64_t> sq_hpa, cq_hpa, db_hpa;
  std::uint64_t cmb_window_hpa = 0;
  std::uint64_t cmb_window_bytes = 0;  // meta page + all ring pages
  std::uint64_t lba_start = 0;
  std::uint64_t lba_size = 0;
  mem::GpaRange dram;  // guest DRAM grant: DMA-visible, eagerly mapped
  std::uint64_t dram_hpa = 0;

  // Every passthrough page can fault at most once, so this bounds the VM's
  // lifetime fault count: window pages (incl. metadata) + doorbell pages.
  std::uint64_t fault_budget_pages() const {
    return cmb_window_bytes / mem::kPageSize + qids.size();
  }
};

// The backend driver plus virtual-device emulation. Control resources (PCIe
// config, bar0, admin queue) are trap-and-emulated here and each access costs
// one vm-exit event; data resources (I/O rings in the CMB, doorbells,
// posted vectors, an LBA range) are provisioned from the physical controller
// and reached by the guest through lazily faulted second-level mappings, so
// after warm-up the I/O path never re-enters this class.
class LightiovHost {
 public:
  using ReqLookup = std::function<std::uint64_t(std::uint32_t queue_index,
                                                std::uint16_t cid)>;

  LightiovHost(sim::EventLoop& loop, mem::HostMemory& mem,
               telemetry::EventLedger& ledger,
               const telemetry::CostModel& costs, mem::GpaRangeAllocator& gpa);

  VmResources provision_vm(std::int32_t vm, nvme::NvmeController& ctrl,
                           std::uint16_t n_queues,
                           std::uint64_t capacity_blocks,
                           const ProvisionOptions& opt = {});
  // Waits (in simulation time) for the VM's in-flight commands to finish,
  // then deletes its pairs and returns qids, LBAs, vectors, and mappings.
  void teardown_vm(std::int32_t vm);

  // Second-level fault handler: maps CMB/doorbell window pages on first
  // touch. Non-window pages are not handled (hard fault for the caller).
  bool handle_queue_fault(std::int32_t vm, std::uint64_t gpa_page);

  // Trap-and-emulate for pcie_config/bar0. Records one vm-exit per call.
  // Reads return the value; writes return 0. Out-of-range reads return
  // all-ones and out-of-range writes are dropped, PCIe style.
  std::uint64_t mmio_access(std::int32_t vm, Region region,
                            std::uint64_t offset, bool is_write,
                            std::uint64_t value, std::uint32_t width);

  nvme::Completion virtual_admin(std::int32_t vm, const nvme::Command& cmd);

  bool provisioned(std::int32_t vm) const { return vms_.count(vm) != 0; }
  bool draining(std::int32_t vm) const;
  const VmResources& resources(std::int32_t vm) const;

  // Guest-side memory plumbing. Every guest load/store goes through the VM's
  // second-level table, so first touches of window pages fault into
  // handle_queue_fault. Accesses to unmapped non-window GPAs throw: that is
  // a guest bug, not a modeled condition.
  std::optional<std::uint64_t> translate(std::int32_t vm, std::uint64_t gpa);
  void guest_write(std::int32_t vm, std::uint64_t gpa, const void* src,
                   std::uint64_t n);
  void guest_read(std::int32_t vm, std::uint64_t gpa, void* dst,
                  std::uint64_t n);
  void guest_write_u32(std::int32_t vm, std::uint64_t gpa, std::uint32_t v);
  void guest_write_u64(std::int32_t vm, std::uint64_t gpa, std::uint64_t v);
  std::uint32_t guest_read_u32(std::int32_t vm, std::uint64_t gpa);
  std::uint64_t guest_read_u64(std::int32_t vm, std::uint64_t gpa);

  // Telemetry only: lets the guest driver resolve (queue index, cid) to the
  // harness request tag for ledger attribution of device-side events.
  void set_req_lookup(std::int32_t vm, ReqLookup fn);

  // Binds the guest ISR for the posted vector of queue `queue_index`.
  void set_guest_isr(std::int32_t vm, std::uint32_t queue_index,
                     std::function<void()> fn);
  telemetry::EventLedger& ledger() { return ledger_; }
  sim::EventLoop& loop() { return loop_; }

  std::uint64_t vm_fault_count(std::int32_t vm) const;
  std::size_t vm_mapped_pages(std::int32_t vm) const;

  // Deterministic text dump of all live grants, for golden tests.
  void manifest(std::ostream& os) const;

 private:
  struct CtrlState {
    nvme::NvmeController* ctrl = nullptr;
    std::uint16_t next_vector = 1;
    std::map<std::uint64_t, std::uint64_t> lba_free;  // start -> blocks
    std::map<std::int32_t, std::pair<std::uint64_t, std::uint64_t>> lba_grants;
    // CMB windows are recycled by exact size; the controller's own CMB
    // allocator is bump-only.
    std::map<std::uint64_t, std::vector<std::uint64_t>> cmb_reuse;
    std::map<std::uint16_t, std::int32_t> qid_vm;
  };

  struct VmContext {
    VmResources res;
    nvme::NvmeController* ctrl = nullptr;
    mem::SecondLevelTable slt;
    std::vector<std::uint8_t> pcie_config;
    std::uint32_t cc = 0;
    std::uint32_t aqa = 0;
    std::uint64_t asq = 0, acq = 0;
    std::uint32_t vasq_head = 0, vasq_tail = 0;
    std::uint32_t vacq_tail = 0;
    bool vacq_phase = true;
    std::vector<bool> cq_created, sq_created;
    bool draining = false;
    std::map<std::uint16_t, std::uint32_t> qid_index;  // physical qid -> slot
    ReqLookup req_lookup;
  };

  CtrlState& ctrl_state(nvme::NvmeController& ctrl);
  VmContext& vm_at(std::int32_t vm);
  const VmContext& vm_at(std::int32_t vm) const;
  void process_virtual_admin(std::int32_t vm, VmContext& c);
  void try_finish_teardown(std::int32_t vm);
  std::uint64_t lba_alloc(CtrlState& cs, std::int32_t vm, std::uint64_t blocks);
  void lba_release(CtrlState& cs, std::int32_t vm);
  std::uint64_t bar0_read(VmContext& c, std::uint64_t offset,
                          std::uint32_t width);
  void bar0_write(std::int32_t vm, VmContext& c, std::uint64_t offset,
                  std::uint64_t value);

  sim::EventLoop& loop_;
  mem::HostMemory& mem_;
  telemetry::EventLedger& ledger_;
  const telemetry::CostModel& costs_;
  mem::GpaRangeAllocator& gpa_;
  std::map<int, CtrlState> ctrls_;
  // unique_ptr: the fault handler and req_lookup chain capture stable
  // pointers into the context.
  std::map<std::int32_t, std::unique_ptr<VmContext>> vms_;
};

}  // namespace iovsim::lightiov
