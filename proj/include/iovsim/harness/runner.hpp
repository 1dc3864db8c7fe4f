#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iovsim/baselines/vhost.hpp"
#include "iovsim/baselines/virtio.hpp"
#include "iovsim/harness/workload.hpp"
#include "iovsim/lightiov/guest.hpp"
#include "iovsim/lightiov/host.hpp"
#include "iovsim/telemetry/stats.hpp"

namespace iovsim::harness {

enum class Backend { kLightiov, kVirtio, kVhostPoll };

std::string_view to_string(Backend b);
std::optional<Backend> backend_from_string(std::string_view s);

struct Scenario {
  Backend backend = Backend::kLightiov;
  std::uint32_t n_vms = 1;
  std::uint32_t n_ssds = 1;
  int poller_cores = 1;    // vhost_poll only
  std::uint32_t n_queues = 1;  // lightiov submit lanes per VM
  std::uint64_t vm_capacity_blocks = 262144;  // 1 GiB at 4 KiB
  std::uint64_t ssd_blocks = 0;  // 0 = sized to the VMs it hosts
  std::uint32_t block_size = 4096;
  std::uint64_t seed = 1;
  WorkloadSpec workload;
  telemetry::CostModel costs;
  bool fetch_log = false;  // record device command fetches (isolation checks)

  void validate() const;  // throws std::invalid_argument
};

// What a run produces besides the ledger. Everything here is derived from
// the simulation clock and the seed, never from wall time.
struct RunResult {
  std::vector<telemetry::VmStats> stats;  // per VM, then a totals row
  std::uint64_t errors = 0;               // nonzero completion statuses
  std::uint64_t writes_verified = 0;      // blocks checked by the sweep
  std::uint64_t integrity_mismatches = 0;
  std::uint64_t poller_cycles = 0;        // core-ps burned (vhost_poll)
  sim::Ps makespan = 0;                   // last completion instant
  std::vector<std::pair<std::string, std::uint64_t>> event_counts;
};

// Uniform face over the three guest stacks: queued submission lanes, a
// publish step (virtio's kick; a no-op elsewhere), and payload-buffer access.
class VmDevice {
 public:
  using CompletionFn =
      std::function<void(std::uint64_t tag, std::uint16_t status)>;

  virtual ~VmDevice() = default;
  virtual std::int32_t vm() const = 0;
  virtual std::uint32_t lanes() const = 0;
  virtual std::uint64_t capacity_blocks() const = 0;
  virtual std::uint64_t lba_start() const = 0;
  virtual lightiov::SubmitResult submit(std::uint32_t lane,
                                        const lightiov::GuestIoRequest& req) = 0;
  virtual void flush() = 0;
  virtual void set_completion_handler(CompletionFn fn) = 0;
  virtual std::uint64_t alloc_buffer(std::uint64_t bytes) = 0;
  virtual void fill_buffer(std::uint64_t gpa,
                           std::span<const std::uint8_t> data) = 0;
};

// A fully assembled simulation: loop, memory, ledger, SSDs, backend stack,
// one device per VM. Tests reach into the parts; batch runs use run().
class World {
 public:
  explicit World(const Scenario& sc);
  ~World();
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  // Builds SSDs, provisions every VM, inits every guest. On a provisioning
  // failure, tears down the VMs that did come up, then rethrows.
  void provision();

  // Closed-loop drive to quota, then the write-verify sweep.
  RunResult run();

  sim::EventLoop& loop() { return loop_; }
  mem::HostMemory& memory() { return mem_; }
  telemetry::EventLedger& ledger() { return ledger_; }
  const telemetry::CostModel& costs() const { return sc_.costs; }
  mem::GpaRangeAllocator& gpa() { return gpa_; }
  const Scenario& scenario() const { return sc_; }
  std::size_t ssd_count() const { return ssds_.size(); }
  nvme::NvmeController& ssd(std::size_t i) { return *ssds_.at(i); }
  VmDevice& vm_device(std::size_t i) { return *devices_.at(i); }
  lightiov::LightiovHost* lightiov_host() { return liov_.get(); }
  baselines::VhostPoller* poller() { return poller_.get(); }
  int ssd_of_vm(std::uint32_t vm) const {
    return static_cast<int>(vm % sc_.n_ssds);
  }

  // Cost-model ceiling for one SSD: requests/s at this block count.
  static double device_limit_iops(const telemetry::CostModel& cm,
                                  std::uint64_t bytes);

 private:
  struct InFlight {
    std::uint32_t job;
    std::uint32_t slot;
    sim::Ps submit;
    std::uint32_t bytes;
    std::uint8_t opcode;
    std::uint64_t vlba;
  };
  struct Job {
    std::unique_ptr<JobStream> stream;
    std::uint64_t quota = 0;
    std::uint64_t submitted = 0;
    std::uint64_t completed = 0;
    std::uint32_t outstanding = 0;
    std::vector<std::uint64_t> buffers;     // one per depth slot
    std::vector<std::uint32_t> free_slots;  // indices into buffers
  };
  struct VmLoad {
    VmDevice* dev = nullptr;
    std::vector<Job> jobs;
    std::unordered_map<std::uint64_t, InFlight> in_flight;
    std::set<std::uint64_t> written;  // vlbas with verified-pattern content
  };

  void build_ssds();
  void prime_vm(VmLoad& load);
  bool top_up(VmLoad& load);  // true if anything was submitted
  void on_complete(std::uint32_t vm_index, std::uint64_t tag,
                   std::uint16_t status);
  bool all_done() const;
  void integrity_sweep(RunResult& out);

  Scenario sc_;
  sim::EventLoop loop_;
  mem::HostMemory mem_;
  telemetry::EventLedger ledger_;
  mem::GpaRangeAllocator gpa_;
  std::vector<std::unique_ptr<nvme::NvmeController>> ssds_;
  std::unique_ptr<lightiov::LightiovHost> liov_;
  std::unique_ptr<baselines::VhostPoller> poller_;
  std::vector<std::unique_ptr<VmDevice>> devices_;
  std::vector<VmLoad> loads_;
  std::uint64_t next_tag_ = 1;
  std::uint64_t errors_ = 0;
  bool provisioned_ = false;
};

// Deterministic payload for (vm, block): what write requests store and the
// integrity sweep expects back.
void pattern_fill(std::int32_t vm, std::uint64_t vlba,
                  std::span<std::uint8_t> out);

RunResult run_scenario(const Scenario& sc);

struct ComparisonEntry {
  Backend backend;
  bool ok = false;
  std::string error;  // set when !ok
  RunResult result;   // valid when ok
};
struct ComparisonResult {
  std::vector<ComparisonEntry> runs;
  bool all_ok() const;
};

// Same scenario and seed per backend, fresh world (hence fresh namespace
// images) each time. A failing run is recorded and does not stop the rest.
ComparisonResult compare_backends(const Scenario& sc);

}  // namespace iovsim::harness
