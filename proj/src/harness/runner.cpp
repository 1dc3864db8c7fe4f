#include "iovsim/harness/runner.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace iovsim::harness {

using telemetry::EventKind;

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::kLightiov: return "lightiov";
    case Backend::kVirtio: return "virtio";
    case Backend::kVhostPoll: return "vhost_poll";
  }
  return "?";
}

std::optional<Backend> backend_from_string(std::string_view s) {
  if (s == "lightiov") return Backend::kLightiov;
  if (s == "virtio") return Backend::kVirtio;
  if (s == "vhost_poll") return Backend::kVhostPoll;
  return std::nullopt;
}

void Scenario::validate() const {
  if (n_vms == 0) throw std::invalid_argument("n_vms must be >= 1");
  if (n_ssds == 0) throw std::invalid_argument("n_ssds must be >= 1");
  if (n_queues == 0) throw std::invalid_argument("n_queues must be >= 1");
  if (block_size < 512 || block_size > mem::kPageSize ||
      (block_size & (block_size - 1)) != 0)
    throw std::invalid_argument("block_size must be a power of two in [512, 4096]");
  if (workload.bs == 0 || workload.bs % block_size != 0)
    throw std::invalid_argument("workload bs must be a multiple of block_size");
  if (workload.bs / block_size > vm_capacity_blocks)
    throw std::invalid_argument("workload bs exceeds VM capacity");
  if (workload.numjobs == 0 || workload.iodepth == 0)
    throw std::invalid_argument("numjobs and iodepth must be >= 1");
  if (backend == Backend::kVhostPoll && poller_cores < 1)
    throw std::invalid_argument("vhost_poll requires poller_cores >= 1");
  if (!costs.valid())
    throw std::invalid_argument("cost model: posted cost must not exceed inject cost");
  if (ssd_blocks != 0) {
    // Heaviest SSD is the one hosting VM 0's residue class.
    const std::uint64_t vms_here = (n_vms + n_ssds - 1) / n_ssds;
    if (vms_here * vm_capacity_blocks > ssd_blocks)
      throw std::invalid_argument("ssd_blocks too small for its VMs");
  }
}

void pattern_fill(std::int32_t vm, std::uint64_t vlba,
                  std::span<std::uint8_t> out) {
  const std::uint64_t base = sim::Rng::combine(
      sim::Rng::combine(0x107a5ULL, static_cast<std::uint64_t>(
                                        static_cast<std::uint32_t>(vm))),
      vlba);
  std::uint64_t i = 0;
  for (; i + 8 <= out.size(); i += 8) {
    const std::uint64_t w = sim::Rng::mix(base + i);
    std::memcpy(out.data() + i, &w, 8);
  }
  if (i < out.size()) {
    const std::uint64_t w = sim::Rng::mix(base + i);
    std::memcpy(out.data() + i, &w, out.size() - i);
  }
}

double World::device_limit_iops(const telemetry::CostModel& cm,
                                std::uint64_t bytes) {
  return 1e12 / static_cast<double>(cm.service(bytes));
}

namespace {

class LightiovVmDevice final : public VmDevice {
 public:
  LightiovVmDevice(lightiov::LightiovHost& host, std::int32_t vm)
      : host_(host), driver_(host, vm) {}

  void init_guest(std::uint32_t want) { driver_.init(want); }

  std::int32_t vm() const override { return driver_.vm(); }
  std::uint32_t lanes() const override { return driver_.n_queues(); }
  std::uint64_t capacity_blocks() const override { return driver_.lba_size(); }
  std::uint64_t lba_start() const override { return driver_.lba_start(); }
  lightiov::SubmitResult submit(std::uint32_t lane,
                                const lightiov::GuestIoRequest& req) override {
    return driver_.submit(lane, req);
  }
  void flush() override {}  // doorbells are posted writes, already published
  void set_completion_handler(CompletionFn fn) override {
    driver_.set_completion_handler(std::move(fn));
  }
  std::uint64_t alloc_buffer(std::uint64_t bytes) override {
    return driver_.alloc_guest(bytes);
  }
  void fill_buffer(std::uint64_t gpa,
                   std::span<const std::uint8_t> data) override {
    host_.guest_write(driver_.vm(), gpa, data.data(), data.size());
  }

 private:
  lightiov::LightiovHost& host_;
  lightiov::GuestDriver driver_;
};

class VirtioVmAdapter final : public VmDevice {
 public:
  VirtioVmAdapter(mem::HostMemory& mem, baselines::VirtioVmDevice dev)
      : mem_(mem), dev_(std::move(dev)) {}

  baselines::VirtioVmDevice& inner() { return dev_; }

  std::int32_t vm() const override { return dev_.vm(); }
  std::uint32_t lanes() const override { return 1; }
  std::uint64_t capacity_blocks() const override { return dev_.lba_capacity(); }
  std::uint64_t lba_start() const override { return lba_start_; }
  void set_lba_start(std::uint64_t v) { lba_start_ = v; }
  lightiov::SubmitResult submit(std::uint32_t,
                                const lightiov::GuestIoRequest& req) override {
    return dev_.submit(req);
  }
  void flush() override { dev_.kick(); }
  void set_completion_handler(CompletionFn fn) override {
    dev_.set_completion_handler(std::move(fn));
  }
  std::uint64_t alloc_buffer(std::uint64_t bytes) override {
    return dev_.alloc_guest(bytes);
  }
  void fill_buffer(std::uint64_t gpa,
                   std::span<const std::uint8_t> data) override {
    mem_.write(dev_.guest_hpa(gpa), data);
  }

 private:
  mem::HostMemory& mem_;
  baselines::VirtioVmDevice dev_;
  std::uint64_t lba_start_ = 0;
};

class VhostVmAdapter final : public VmDevice {
 public:
  VhostVmAdapter(mem::HostMemory& mem, baselines::VhostVmDevice dev)
      : mem_(mem), dev_(std::move(dev)) {}

  baselines::VhostVmDevice& inner() { return dev_; }

  std::int32_t vm() const override { return dev_.vm(); }
  std::uint32_t lanes() const override { return 1; }
  std::uint64_t capacity_blocks() const override { return dev_.lba_capacity(); }
  std::uint64_t lba_start() const override { return lba_start_; }
  void set_lba_start(std::uint64_t v) { lba_start_ = v; }
  lightiov::SubmitResult submit(std::uint32_t,
                                const lightiov::GuestIoRequest& req) override {
    return dev_.submit(req);
  }
  void flush() override {}  // the poller discovers work by itself
  void set_completion_handler(CompletionFn fn) override {
    dev_.set_completion_handler(std::move(fn));
  }
  std::uint64_t alloc_buffer(std::uint64_t bytes) override {
    return dev_.alloc_guest(bytes);
  }
  void fill_buffer(std::uint64_t gpa,
                   std::span<const std::uint8_t> data) override {
    mem_.write(dev_.guest_hpa(gpa), data);
  }

 private:
  mem::HostMemory& mem_;
  baselines::VhostVmDevice dev_;
  std::uint64_t lba_start_ = 0;
};

}  // namespace

World::World(const Scenario& sc) : sc_(sc) { sc_.validate(); }

World::~World() = default;

void World::build_ssds() {
  for (std::uint32_t i = 0; i < sc_.n_ssds; ++i) {
    const std::uint64_t vms_here =
        sc_.n_vms / sc_.n_ssds + (i < sc_.n_vms % sc_.n_ssds ? 1 : 0);
    nvme::ControllerConfig cfg;
    cfg.ctrl_id = static_cast<int>(i);
    cfg.block_size = sc_.block_size;
    cfg.total_blocks = sc_.ssd_blocks != 0
                           ? sc_.ssd_blocks
                           : std::max<std::uint64_t>(vms_here, 1) *
                                 sc_.vm_capacity_blocks;
    cfg.fetch_log_enabled = sc_.fetch_log;
    auto ctrl = std::make_unique<nvme::NvmeController>(
        loop_, mem_, ledger_, sc_.costs,
        std::make_unique<nvme::MemStore>(sc_.block_size), cfg);
    // Host-driver bring-up; backends provision through admin_execute.
    constexpr std::uint32_t kAdminDepth = 32;
    ctrl->set_admin_queues(mem_.alloc(kAdminDepth * nvme::kSqeBytes),
                           mem_.alloc(kAdminDepth * nvme::kCqeBytes),
                           kAdminDepth);
    ctrl->enable();
    ssds_.push_back(std::move(ctrl));
  }
}

void World::provision() {
  if (provisioned_) throw std::logic_error("world already provisioned");
  build_ssds();

  const WorkloadSpec& w = sc_.workload;
  const std::uint64_t outstanding =
      std::uint64_t{w.numjobs} * w.iodepth;  // per VM
  const std::uint64_t buffer_bytes =
      outstanding * (w.bs + mem::kPageSize) + (64 << 10);

  if (sc_.backend == Backend::kLightiov)
    liov_ = std::make_unique<lightiov::LightiovHost>(loop_, mem_, ledger_,
                                                     sc_.costs, gpa_);
  if (sc_.backend == Backend::kVhostPoll)
    poller_ = std::make_unique<baselines::VhostPoller>(
        loop_, mem_, ledger_, sc_.costs,
        baselines::VhostPoller::Config{sc_.poller_cores});

  std::vector<std::uint64_t> lba_next(sc_.n_ssds, 0);
  std::uint32_t done = 0;
  try {
    for (std::uint32_t vm = 0; vm < sc_.n_vms; ++vm) {
      auto& ctrl = *ssds_[vm % sc_.n_ssds];
      switch (sc_.backend) {
        case Backend::kLightiov: {
          const std::uint64_t per_lane =
              ((w.numjobs + sc_.n_queues - 1) / sc_.n_queues) *
              std::uint64_t{w.iodepth};
          lightiov::ProvisionOptions opt;
          opt.queue_depth = static_cast<std::uint32_t>(std::clamp<std::uint64_t>(
              per_lane + 1, 2, nvme::kMaxQueueDepth));
          opt.dram_bytes = buffer_bytes;
          liov_->provision_vm(static_cast<std::int32_t>(vm), ctrl,
                              static_cast<std::uint16_t>(sc_.n_queues),
                              sc_.vm_capacity_blocks, opt);
          auto dev = std::make_unique<LightiovVmDevice>(
              *liov_, static_cast<std::int32_t>(vm));
          dev->init_guest(sc_.n_queues);
          devices_.push_back(std::move(dev));
          break;
        }
        case Backend::kVirtio: {
          baselines::VirtioVmDevice::Config cfg;
          cfg.vm = static_cast<std::int32_t>(vm);
          cfg.ring_size = static_cast<std::uint16_t>(std::clamp<std::uint64_t>(
              3 * outstanding + 3, 6, 32768));
          cfg.lba_start = lba_next[vm % sc_.n_ssds];
          cfg.lba_size = sc_.vm_capacity_blocks;
          cfg.dram_bytes =
              buffer_bytes + std::uint64_t{cfg.ring_size} * 48 + mem::kPageSize;
          if (cfg.lba_start + cfg.lba_size > ctrl.total_blocks())
            throw std::runtime_error("ssd namespace exhausted");
          lba_next[vm % sc_.n_ssds] += cfg.lba_size;
          auto dev = std::make_unique<VirtioVmAdapter>(
              mem_, baselines::VirtioVmDevice(loop_, mem_, ledger_, sc_.costs,
                                              gpa_, ctrl, cfg));
          dev->set_lba_start(cfg.lba_start);
          dev->inner().init();
          devices_.push_back(std::move(dev));
          break;
        }
        case Backend::kVhostPoll: {
          baselines::VhostVmDevice::Config cfg;
          cfg.vm = static_cast<std::int32_t>(vm);
          cfg.queue_depth = static_cast<std::uint32_t>(std::clamp<std::uint64_t>(
              outstanding + 1, 2, nvme::kMaxQueueDepth));
          cfg.lba_start = lba_next[vm % sc_.n_ssds];
          cfg.lba_size = sc_.vm_capacity_blocks;
          cfg.dram_bytes =
              buffer_bytes + std::uint64_t{cfg.queue_depth} * 80 + mem::kPageSize;
          if (cfg.lba_start + cfg.lba_size > ctrl.total_blocks())
            throw std::runtime_error("ssd namespace exhausted");
          lba_next[vm % sc_.n_ssds] += cfg.lba_size;
          auto dev = std::make_unique<VhostVmAdapter>(
              mem_, baselines::VhostVmDevice(loop_, mem_, ledger_, sc_.costs,
                                             gpa_, ctrl, *poller_, cfg));
          dev->set_lba_start(cfg.lba_start);
          dev->inner().init();
          devices_.push_back(std::move(dev));
          break;
        }
      }
      ++done;
    }
  } catch (...) {
    // Partial teardown: the VMs that did provision release their queues,
    // grants, and LBA ranges before the error propagates.
    if (liov_) {
      for (std::uint32_t vm = 0; vm < done; ++vm)
        liov_->teardown_vm(static_cast<std::int32_t>(vm));
      loop_.run();
    }
    throw;
  }

  // Load state: streams, per-slot buffers, completion wiring.
  loads_.resize(sc_.n_vms);
  for (std::uint32_t vm = 0; vm < sc_.n_vms; ++vm) {
    VmLoad& load = loads_[vm];
    load.dev = devices_[vm].get();
    load.jobs.resize(w.numjobs);
    for (std::uint32_t j = 0; j < w.numjobs; ++j) {
      Job& job = load.jobs[j];
      job.stream = std::make_unique<JobStream>(w, sc_.seed,
                                               static_cast<std::int32_t>(vm), j,
                                               sc_.vm_capacity_blocks,
                                               sc_.block_size);
      job.quota = job.stream->quota();
      for (std::uint32_t d = 0; d < w.iodepth; ++d) {
        job.buffers.push_back(load.dev->alloc_buffer(w.bs));
        job.free_slots.push_back(w.iodepth - 1 - d);
      }
    }
    load.dev->set_completion_handler(
        [this, vm](std::uint64_t tag, std::uint16_t status) {
          on_complete(vm, tag, status);
        });
  }
  provisioned_ = true;
}

bool World::top_up(VmLoad& load) {
  const WorkloadSpec& w = sc_.workload;
  bool any = false;
  for (std::uint32_t j = 0; j < load.jobs.size(); ++j) {
    Job& job = load.jobs[j];
    while (job.outstanding < w.iodepth && job.submitted < job.quota) {
      const GenRequest g = job.stream->next();
      const std::uint32_t slot = job.free_slots.back();

      lightiov::GuestIoRequest req;
      req.write = g.write;
      req.vlba = g.vlba;
      req.blocks = g.blocks;
      req.buffer_gpa = job.buffers[slot];
      req.tag = next_tag_++;
      if (g.write) {
        std::vector<std::uint8_t> payload(w.bs);
        for (std::uint32_t b = 0; b < g.blocks; ++b)
          pattern_fill(load.dev->vm(), g.vlba + b,
                       std::span(payload).subspan(
                           std::uint64_t{b} * sc_.block_size, sc_.block_size));
        load.dev->fill_buffer(req.buffer_gpa, payload);
      }

      const auto res = load.dev->submit(j % load.dev->lanes(), req);
      if (res == lightiov::SubmitResult::kQueueFull) break;  // retry on complete
      if (res != lightiov::SubmitResult::kOk)
        throw std::logic_error("generated request rejected by guest driver");

      job.free_slots.pop_back();
      ++job.outstanding;
      ++job.submitted;
      load.in_flight[req.tag] =
          InFlight{j, slot, loop_.now(), w.bs,
                   g.write ? nvme::kWrite : nvme::kRead, g.vlba};
      any = true;
    }
  }
  return any;
}

void World::prime_vm(VmLoad& load) {
  if (top_up(load)) load.dev->flush();
}

void World::on_complete(std::uint32_t vm_index, std::uint64_t tag,
                        std::uint16_t status) {
  VmLoad& load = loads_[vm_index];
  auto it = load.in_flight.find(tag);
  if (it == load.in_flight.end()) {
    ++errors_;  // completion for a request we never issued
    return;
  }
  const InFlight f = it->second;
  load.in_flight.erase(it);
  Job& job = load.jobs[f.job];
  --job.outstanding;
  ++job.completed;
  job.free_slots.push_back(f.slot);

  if (status != 0) {
    ++errors_;
  } else if (f.opcode == nvme::kWrite) {
    for (std::uint32_t b = 0; b < f.bytes / sc_.block_size; ++b)
      load.written.insert(f.vlba + b);
  }
  ledger_.complete_request(telemetry::RequestRecord{
      load.dev->vm(), f.job, tag, f.submit, loop_.now(), f.bytes, f.opcode});

  if (top_up(load)) load.dev->flush();
}

bool World::all_done() const {
  for (const auto& load : loads_)
    for (const auto& job : load.jobs)
      if (job.completed != job.quota) return false;
  return true;
}

void World::integrity_sweep(RunResult& out) {
  std::vector<std::uint8_t> got(sc_.block_size), want(sc_.block_size);
  for (std::uint32_t vm = 0; vm < sc_.n_vms; ++vm) {
    VmLoad& load = loads_[vm];
    auto& store = ssds_[vm % sc_.n_ssds]->store();
    const std::uint64_t lba0 = load.dev->lba_start();
    for (std::uint64_t vlba : load.written) {
      store.read_block(lba0 + vlba, got);
      pattern_fill(load.dev->vm(), vlba, want);
      ++out.writes_verified;
      if (got != want) ++out.integrity_mismatches;
    }
  }
}

RunResult World::run() {
  if (!provisioned_) provision();
  for (auto& load : loads_) prime_vm(load);
  if (poller_) poller_->start();
  loop_.run_until([this] { return all_done(); });
  if (poller_) poller_->stop();
  loop_.run();
  if (!all_done())
    throw std::runtime_error("workload stalled before reaching quota");

  RunResult r;
  r.stats = telemetry::aggregate(ledger_, telemetry::Window{});
  r.errors = errors_;
  r.poller_cycles = poller_ ? poller_->cycles() : 0;
  for (const auto& req : ledger_.requests())
    r.makespan = std::max(r.makespan, req.complete);
  for (int k = 0; k < telemetry::kEventKindCount; ++k) {
    const auto kind = static_cast<EventKind>(k);
    r.event_counts.emplace_back(std::string(telemetry::to_string(kind)),
                                ledger_.count(kind));
  }
  integrity_sweep(r);
  return r;
}

RunResult run_scenario(const Scenario& sc) {
  World w(sc);
  w.provision();
  return w.run();
}

bool ComparisonResult::all_ok() const {
  for (const auto& r : runs)
    if (!r.ok) return false;
  return !runs.empty();
}

ComparisonResult compare_backends(const Scenario& sc) {
  ComparisonResult out;
  for (Backend b :
       {Backend::kLightiov, Backend::kVhostPoll, Backend::kVirtio}) {
    Scenario s = sc;
    s.backend = b;
    ComparisonEntry e;
    e.backend = b;
    try {
      e.result = run_scenario(s);
      e.ok = true;
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
    out.runs.push_back(std::move(e));
  }
  return out;
}

}  // namespace iovsim::harness
