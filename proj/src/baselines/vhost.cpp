#include "iovsim/baselines/vhost.hpp"

#include <algorithm>
#include <stdexcept>

namespace iovsim::baselines {

using mem::kPageSize;
using telemetry::EventKind;

VhostPoller::VhostPoller(sim::EventLoop& loop, mem::HostMemory& mem,
                         telemetry::EventLedger& ledger,
                         const telemetry::CostModel& costs, Config cfg)
    : loop_(loop), mem_(mem), ledger_(ledger), costs_(costs), cfg_(cfg) {
  cfg_.cores = std::max(cfg_.cores, 1);
}

// Same rule as everywhere else: ledger appends happen at their instant, so
// work costed ahead of now is deferred to the point it lands.
void VhostPoller::charge(sim::Ps t, std::int32_t vm, EventKind kind,
                         std::uint64_t bytes, std::uint64_t req) {
  if (t == loop_.now()) {
    ledger_.append(t, vm, kind, bytes, req);
    return;
  }
  loop_.at(t, [this, vm, kind, bytes, req] {
    ledger_.append(loop_.now(), vm, kind, bytes, req);
  });
}

int VhostPoller::attach_ssd(nvme::NvmeController& ctrl) {
  auto it = slot_of_.find(&ctrl);
  if (it != slot_of_.end()) return it->second;

  Ssd ssd;
  ssd.ctrl = &ctrl;
  ssd.qid = ctrl.alloc_qid();
  ssd.depth = nvme::kMaxQueueDepth;  // one deep pair absorbs every shadow SQ
  ssd.hsq = mem_.alloc(std::uint64_t{ssd.depth} * nvme::kSqeBytes);
  ssd.hcq = mem_.alloc(std::uint64_t{ssd.depth} * nvme::kCqeBytes);

  nvme::Command mk;
  mk.opcode = nvme::kCreateIoCq;
  mk.prp1 = ssd.hcq;
  mk.cdw10 = ssd.qid | ((ssd.depth - 1) << 16);
  mk.cdw11 = 0x1;  // physically contiguous, IEN clear: reaped by sweep only
  if (ctrl.admin_execute(mk).status != nvme::kSuccess)
    throw std::runtime_error("vhost poller: CREATE_IO_CQ failed");
  mk = nvme::Command{};
  mk.opcode = nvme::kCreateIoSq;
  mk.prp1 = ssd.hsq;
  mk.cdw10 = ssd.qid | ((ssd.depth - 1) << 16);
  mk.cdw11 = (static_cast<std::uint32_t>(ssd.qid) << 16) | 0x1;
  if (ctrl.admin_execute(mk).status != nvme::kSuccess)
    throw std::runtime_error("vhost poller: CREATE_IO_SQ failed");

  ssd.free_cids.reserve(ssd.depth);
  for (std::uint32_t i = ssd.depth; i-- > 0;)
    ssd.free_cids.push_back(static_cast<std::uint16_t>(i));

  const int slot = static_cast<int>(ssds_.size());
  const std::uint16_t qid = ssd.qid;
  ssds_.push_back(std::move(ssd));
  slot_of_[&ctrl] = slot;

  auto prev = ctrl.req_lookup;
  ctrl.req_lookup = [this, slot, qid, prev](std::uint16_t sqid,
                                            std::uint16_t cid) -> std::uint64_t {
    if (sqid == qid) {
      const auto& live = ssds_[slot].live;
      auto lit = live.find(cid);
      return lit == live.end() ? 0 : lit->second.tag;
    }
    return prev ? prev(sqid, cid) : 0;
  };
  return slot;
}

void VhostPoller::register_queue(ShadowQueue* q) { queues_.push_back(q); }

void VhostPoller::start() {
  if (running_) return;
  running_ = true;
  loop_.after(0, [this] {
    if (running_) sweep();
  });
}

void VhostPoller::stop() { running_ = false; }

std::size_t VhostPoller::sweep() {
  const sim::Ps t0 = loop_.now();
  sim::Ps cursor = t0;
  std::size_t converted = 0;
  for (auto& ssd : ssds_) reap(ssd, cursor);
  for (auto* q : queues_) converted += scan(*q, cursor);

  // The thread burns the whole gap to the next sweep; an idle pass still
  // costs a tick. poller_cycle carries core-ps, pure CPU accounting.
  const sim::Ps duration = std::max(cursor - t0, costs_.tick_ps);
  const auto burn = static_cast<std::uint64_t>(cfg_.cores) * duration;
  cycles_ += burn;
  ledger_.append(t0, telemetry::kHostVm, EventKind::poller_cycle, burn);
  if (running_)
    loop_.at(t0 + duration, [this] {
      if (running_) sweep();
    });
  return converted;
}

std::size_t VhostPoller::reap(Ssd& ssd, sim::Ps& cursor) {
  std::size_t reaped = 0;
  while (true) {
    std::uint8_t raw[nvme::kCqeBytes];
    mem_.read(ssd.hcq + std::uint64_t{ssd.cq_head} * nvme::kCqeBytes, raw);
    const nvme::Completion comp = nvme::Completion::decode(raw);
    if (comp.phase != ssd.cq_phase) break;
    ssd.cq_head = (ssd.cq_head + 1) % ssd.depth;
    if (ssd.cq_head == 0) ssd.cq_phase = !ssd.cq_phase;
    ++reaped;
    cursor += costs_.poll_complete_ps / cfg_.cores;

    auto it = ssd.live.find(comp.cid);
    if (it == ssd.live.end()) {
      ledger_.append(loop_.now(), telemetry::kHostVm, EventKind::spurious,
                     comp.cid);
      continue;
    }
    const Live l = it->second;
    ssd.live.erase(it);
    ssd.free_cids.push_back(comp.cid);
    complete_shadow(*l.q, l.shadow_cid, l.sq_head_after, comp.result,
                    comp.status, cursor);
  }
  if (reaped)
    mem_.write_u32(ssd.ctrl->doorbell_hpa(ssd.qid) + 4, ssd.cq_head);
  return reaped;
}

std::size_t VhostPoller::scan(ShadowQueue& q, sim::Ps& cursor) {
  cursor += costs_.scan_queue_ps / cfg_.cores;
  Ssd& ssd = ssds_[static_cast<std::size_t>(q.ssd)];
  std::size_t converted = 0;
  while (q.sq_head != q.sq_tail) {
    if (ssd.free_cids.empty()) break;  // device pair full: retry next sweep
    std::uint8_t raw[nvme::kSqeBytes];
    mem_.read(q.sq_hpa + std::uint64_t{q.sq_head % q.depth} * nvme::kSqeBytes,
              raw);
    ++q.sq_head;
    cursor += costs_.poll_convert_ps / cfg_.cores;

    nvme::Command cmd = nvme::Command::decode(raw);
    const std::uint16_t shadow_cid = cmd.cid;
    const auto head_after = static_cast<std::uint16_t>(q.sq_head % q.depth);
    auto tit = q.tags.find(shadow_cid);
    const std::uint64_t tag = tit == q.tags.end() ? 0 : tit->second;

    // Relocate and gate: the guest only ever names virtual LBAs, and a bad
    // one dies here, before the device sees it.
    const std::uint64_t vlba = cmd.slba();
    const std::uint32_t blocks = cmd.blocks();
    if (vlba >= q.lba_size || blocks > q.lba_size - vlba) {
      complete_shadow(q, shadow_cid, head_after, 0, nvme::kLbaOutOfRange,
                      cursor);
      continue;
    }
    cmd.set_slba(q.lba_start + vlba);

    const std::uint16_t host_cid = ssd.free_cids.back();
    ssd.free_cids.pop_back();
    ssd.live[host_cid] = Live{&q, shadow_cid, tag, head_after};
    cmd.cid = host_cid;
    cmd.encode(raw);
    mem_.write(ssd.hsq + std::uint64_t{ssd.sq_tail} * nvme::kSqeBytes, raw);
    ssd.sq_tail = (ssd.sq_tail + 1) % ssd.depth;
    ++converted;
  }
  if (converted) {
    nvme::NvmeController* ctrl = ssd.ctrl;
    const std::uint16_t qid = ssd.qid;
    const std::uint32_t tail = ssd.sq_tail;
    // One doorbell per queue per sweep, rung when the conversions are done.
    loop_.at(cursor,
             [this, ctrl, qid, tail] { mem_.write_u32(ctrl->doorbell_hpa(qid), tail); });
  }
  return converted;
}

void VhostPoller::complete_shadow(ShadowQueue& q, std::uint16_t shadow_cid,
                                  std::uint16_t sq_head_after,
                                  std::uint32_t result, std::uint16_t status,
                                  sim::Ps at) {
  nvme::Completion c;
  c.result = result;
  c.sq_head = sq_head_after;
  c.sqid = 1;  // the guest's single I/O queue
  c.cid = shadow_cid;
  c.status = status;
  c.phase = ((q.cq_tail / q.depth) % 2) == 0;
  std::uint8_t raw[nvme::kCqeBytes];
  c.encode(raw);
  // The guest caps in-flight at depth-1, so this slot is consumed or free.
  mem_.write(q.cq_hpa + std::uint64_t{q.cq_tail % q.depth} * nvme::kCqeBytes,
             raw);
  ++q.cq_tail;

  const auto tit = q.tags.find(shadow_cid);
  const std::uint64_t tag = tit == q.tags.end() ? 0 : tit->second;
  charge(at, q.vm, EventKind::intr_injected, 0, tag);
  loop_.at(at + costs_.inject_ps, q.on_complete);
}

VhostVmDevice::VhostVmDevice(sim::EventLoop& loop, mem::HostMemory& mem,
                             telemetry::EventLedger& ledger,
                             const telemetry::CostModel& costs,
                             mem::GpaRangeAllocator& gpa,
                             nvme::NvmeController& ctrl, VhostPoller& poller,
                             Config cfg)
    : loop_(loop),
      mem_(mem),
      ledger_(ledger),
      costs_(costs),
      gpa_(gpa),
      ctrl_(ctrl),
      poller_(poller),
      cfg_(cfg) {}

std::uint64_t VhostVmDevice::alloc_guest(std::uint64_t bytes) {
  const std::uint64_t base = guest_next_;
  const std::uint64_t sz = mem::pages_for(bytes) * kPageSize;
  if (base + sz > dram_.end()) throw std::runtime_error("guest dram exhausted");
  guest_next_ += sz;
  return base;
}

std::uint64_t VhostVmDevice::guest_hpa(std::uint64_t gpa) const {
  if (!dram_.contains(gpa)) throw std::runtime_error("gpa outside guest dram");
  return dram_hpa_ + (gpa - dram_.base);
}

void VhostVmDevice::init() {
  dram_ = gpa_.alloc(cfg_.vm, cfg_.dram_bytes);
  dram_hpa_ = mem_.alloc(dram_.size);
  guest_next_ = dram_.base;

  // Pin + premap the whole grant: this is what buys the zero-copy data path.
  // PRPs carry these GPAs and the device translates through the shared table.
  const std::uint64_t pages = dram_.size / kPageSize;
  for (std::uint64_t i = 0; i < pages; ++i)
    ctrl_.dma().map(mem::page_of(dram_.base) + i, mem::page_of(dram_hpa_) + i,
                    cfg_.vm);

  const int slot = poller_.attach_ssd(ctrl_);
  const std::uint32_t depth = std::max(cfg_.queue_depth, 2u);
  const std::uint64_t sq_gpa = alloc_guest(std::uint64_t{depth} * nvme::kSqeBytes);
  const std::uint64_t cq_gpa = alloc_guest(std::uint64_t{depth} * nvme::kCqeBytes);

  sq_.vm = cfg_.vm;
  sq_.ssd = slot;
  sq_.sq_hpa = guest_hpa(sq_gpa);
  sq_.cq_hpa = guest_hpa(cq_gpa);
  sq_.depth = depth;
  sq_.lba_start = cfg_.lba_start;
  sq_.lba_size = cfg_.lba_size;
  sq_.on_complete = [this] { drain_cq(); };
  poller_.register_queue(&sq_);

  free_cids_.reserve(depth);
  for (std::uint32_t i = depth; i-- > 0;)
    free_cids_.push_back(static_cast<std::uint16_t>(i));
  prp_page_.assign(depth, 0);
}

lightiov::SubmitResult VhostVmDevice::submit(const lightiov::GuestIoRequest& req) {
  if (sq_.tags.size() + 1 >= sq_.depth)
    return lightiov::SubmitResult::kQueueFull;
  if (req.blocks == 0 || req.blocks - 1 > 0xffff)
    return lightiov::SubmitResult::kRangeError;
  const std::uint64_t bytes = std::uint64_t{req.blocks} * ctrl_.block_size();
  const std::uint64_t off = req.buffer_gpa & (kPageSize - 1);
  const std::uint64_t npages = mem::pages_for(off + bytes);

  const std::uint16_t cid = free_cids_.back();
  free_cids_.pop_back();

  nvme::Command cmd;
  cmd.opcode = req.write ? nvme::kWrite : nvme::kRead;
  cmd.cid = cid;
  cmd.nsid = 1;
  cmd.set_slba(req.vlba);  // virtual: the poller relocates
  cmd.set_nlb(static_cast<std::uint16_t>(req.blocks - 1));
  cmd.prp1 = req.buffer_gpa;
  if (npages == 2) {
    cmd.prp2 = mem::page_base(req.buffer_gpa) + kPageSize;
  } else if (npages > 2) {
    if (prp_page_[cid] == 0) prp_page_[cid] = alloc_guest(kPageSize);
    const std::uint64_t list = prp_page_[cid];
    for (std::uint64_t e = 1; e < npages; ++e)
      mem_.write_u64(guest_hpa(list) + (e - 1) * 8,
                     mem::page_base(req.buffer_gpa) + e * kPageSize);
    cmd.prp2 = list;
  }

  std::uint8_t raw[nvme::kSqeBytes];
  cmd.encode(raw);
  mem_.write(sq_.sq_hpa + std::uint64_t{sq_.sq_tail % sq_.depth} * nvme::kSqeBytes,
             raw);
  sq_.tags[cid] = req.tag;
  ++sq_.sq_tail;
  // The shadow doorbell is a plain store into shared memory. It costs
  // nothing and traps nowhere; it exists so traces have a submit anchor.
  ledger_.append(loop_.now(), cfg_.vm, EventKind::doorbell,
                 sq_.sq_tail % sq_.depth, req.tag);
  return lightiov::SubmitResult::kOk;
}

void VhostVmDevice::drain_cq() {
  while (true) {
    std::uint8_t raw[nvme::kCqeBytes];
    mem_.read(sq_.cq_hpa + std::uint64_t{cq_head_ % sq_.depth} * nvme::kCqeBytes,
              raw);
    const nvme::Completion comp = nvme::Completion::decode(raw);
    const bool expected = ((cq_head_ / sq_.depth) % 2) == 0;
    if (comp.phase != expected) break;
    ++cq_head_;

    auto it = sq_.tags.find(comp.cid);
    if (it == sq_.tags.end()) {
      ledger_.append(loop_.now(), cfg_.vm, EventKind::spurious, comp.cid);
      continue;
    }
    const std::uint64_t tag = it->second;
    sq_.tags.erase(it);
    free_cids_.push_back(comp.cid);
    if (on_complete_) on_complete_(tag, comp.status);
  }
}

}  // namespace iovsim::baselines
