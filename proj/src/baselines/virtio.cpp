#include "iovsim/baselines/virtio.hpp"

#include <cassert>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace iovsim::baselines {

using mem::kPageSize;
using telemetry::EventKind;

namespace {
void put_u16(std::uint8_t* p, std::uint16_t v) { std::memcpy(p, &v, 2); }
void put_u32(std::uint8_t* p, std::uint32_t v) { std::memcpy(p, &v, 4); }
void put_u64(std::uint8_t* p, std::uint64_t v) { std::memcpy(p, &v, 8); }
}  // namespace

// Ledger timestamps must be appended in loop order (monotone); anything that
// logically happens later in this host pass is deferred to its instant.
void VirtioVmDevice::charge(sim::Ps t, EventKind k, std::uint64_t bytes,
                            std::uint64_t req) {
  if (t == loop_.now()) {
    ledger_.append(t, cfg_.vm, k, bytes, req);
    return;
  }
  loop_.at(t, [this, k, bytes, req] {
    ledger_.append(loop_.now(), cfg_.vm, k, bytes, req);
  });
}

VirtioVmDevice::VirtioVmDevice(sim::EventLoop& loop, mem::HostMemory& mem,
                               telemetry::EventLedger& ledger,
                               const telemetry::CostModel& costs,
                               mem::GpaRangeAllocator& gpa,
                               nvme::NvmeController& ctrl, Config cfg)
    : loop_(loop),
      mem_(mem),
      ledger_(ledger),
      costs_(costs),
      gpa_(gpa),
      ctrl_(ctrl),
      cfg_(cfg) {}

std::uint64_t VirtioVmDevice::alloc_guest(std::uint64_t bytes) {
  const std::uint64_t base = guest_next_;
  const std::uint64_t sz = mem::pages_for(bytes) * kPageSize;
  if (base + sz > dram_.end()) throw std::runtime_error("guest dram exhausted");
  guest_next_ += sz;
  return base;
}

std::uint64_t VirtioVmDevice::guest_hpa(std::uint64_t gpa) const {
  if (!dram_.contains(gpa)) throw std::runtime_error("gpa outside guest dram");
  return dram_hpa_ + (gpa - dram_.base);
}

void VirtioVmDevice::init() {
  dram_ = gpa_.alloc(cfg_.vm, cfg_.dram_bytes);
  dram_hpa_ = mem_.alloc(dram_.size);
  guest_next_ = dram_.base;

  const std::uint32_t qsz = cfg_.ring_size;
  desc_gpa_ = alloc_guest(std::uint64_t{qsz} * 16);
  avail_gpa_ = alloc_guest(6 + std::uint64_t{qsz} * 2);
  used_gpa_ = alloc_guest(6 + std::uint64_t{qsz} * 8);
  const std::uint64_t headers = alloc_guest(std::uint64_t{qsz} * 16);
  const std::uint64_t statuses = alloc_guest(qsz);
  header_gpa_.resize(qsz);
  status_gpa_.resize(qsz);
  for (std::uint32_t i = 0; i < qsz; ++i) {
    header_gpa_[i] = headers + std::uint64_t{i} * 16;
    status_gpa_[i] = statuses + i;
  }
  bounce_.assign(qsz, {0, 0});
  free_descs_.reserve(qsz);
  for (std::uint32_t i = qsz; i-- > 0;)
    free_descs_.push_back(static_cast<std::uint16_t>(i));

  // Host-side queue pair, interrupt-driven: the backend thread wakes on the
  // device interrupt rather than polling (that contrast belongs to vhost).
  qid_ = ctrl_.alloc_qid();
  vector_ = static_cast<std::uint16_t>(0x8000 + qid_);
  hdepth_ = std::max<std::uint32_t>(2, qsz);
  hsq_ = mem_.alloc(std::uint64_t{hdepth_} * nvme::kSqeBytes);
  hcq_ = mem_.alloc(std::uint64_t{hdepth_} * nvme::kCqeBytes);

  nvme::Command mk;
  mk.opcode = nvme::kCreateIoCq;
  mk.prp1 = hcq_;
  mk.cdw10 = qid_ | ((hdepth_ - 1) << 16);
  mk.cdw11 = (static_cast<std::uint32_t>(vector_) << 16) | 0x2 | 0x1;
  if (ctrl_.admin_execute(mk).status != nvme::kSuccess)
    throw std::runtime_error("virtio backend: CREATE_IO_CQ failed");
  mk = nvme::Command{};
  mk.opcode = nvme::kCreateIoSq;
  mk.prp1 = hsq_;
  mk.cdw10 = qid_ | ((hdepth_ - 1) << 16);
  mk.cdw11 = (static_cast<std::uint32_t>(qid_) << 16) | 0x1;
  if (ctrl_.admin_execute(mk).status != nvme::kSuccess)
    throw std::runtime_error("virtio backend: CREATE_IO_SQ failed");
  ctrl_.set_host_isr(vector_, [this] { host_reap(); });

  free_cids_.reserve(hdepth_);
  for (std::uint32_t i = hdepth_; i-- > 0;)
    free_cids_.push_back(static_cast<std::uint16_t>(i));

  auto prev = ctrl_.req_lookup;
  ctrl_.req_lookup = [this, prev](std::uint16_t sqid,
                                  std::uint16_t cid) -> std::uint64_t {
    if (sqid == qid_) {
      auto it = pending_.find(cid);
      return it == pending_.end() ? 0 : it->second.tag;
    }
    return prev ? prev(sqid, cid) : 0;
  };
}

std::uint16_t VirtioVmDevice::take_desc() {
  const std::uint16_t d = free_descs_.back();
  free_descs_.pop_back();
  return d;
}

lightiov::SubmitResult VirtioVmDevice::submit(const lightiov::GuestIoRequest& req) {
  if (free_descs_.size() < 3) return lightiov::SubmitResult::kQueueFull;
  const std::uint32_t qsz = cfg_.ring_size;
  const std::uint64_t bytes = std::uint64_t{req.blocks} * ctrl_.block_size();

  const std::uint16_t d0 = take_desc();
  const std::uint16_t d1 = take_desc();
  const std::uint16_t d2 = take_desc();

  // Header cell: type, reserved, sector (512-byte units, virtio-blk style).
  std::uint8_t hdr[16];
  put_u32(hdr + 0, req.write ? kBlkTOut : kBlkTIn);
  put_u32(hdr + 4, 0);
  put_u64(hdr + 8, req.vlba * (ctrl_.block_size() / 512));
  mem_.write(guest_hpa(header_gpa_[d0]), hdr);

  const VirtqDesc chain[3] = {
      {header_gpa_[d0], 16, kDescNext, d1},
      {req.buffer_gpa, static_cast<std::uint32_t>(bytes),
       static_cast<std::uint16_t>((req.write ? 0 : kDescWrite) | kDescNext), d2},
      {status_gpa_[d0], 1, kDescWrite, 0},
  };
  const std::uint16_t ids[3] = {d0, d1, d2};
  for (int i = 0; i < 3; ++i) {
    std::uint8_t raw[16];
    put_u64(raw + 0, chain[i].addr);
    put_u32(raw + 8, chain[i].len);
    put_u16(raw + 12, chain[i].flags);
    put_u16(raw + 14, chain[i].next);
    mem_.write(guest_hpa(desc_gpa_ + std::uint64_t{ids[i]} * 16), raw);
  }

  std::uint8_t cell[2];
  put_u16(cell, d0);
  mem_.write(guest_hpa(avail_gpa_ + 4 + std::uint64_t{avail_idx_ % qsz} * 2),
             cell);
  ++avail_idx_;
  put_u16(cell, avail_idx_);
  mem_.write(guest_hpa(avail_gpa_ + 2), cell);

  req_tag_[d0] = req.tag;
  ++in_flight_;
  return lightiov::SubmitResult::kOk;
}

void VirtioVmDevice::kick() {
  if (avail_idx_ == kicked_upto_) return;  // nothing new: no exit either
  const std::uint16_t upto = avail_idx_;
  // A kick covering exactly one request is attributable to it; a batched
  // kick belongs to no single request and stays untagged.
  std::uint64_t req = 0;
  if (static_cast<std::uint16_t>(upto - kicked_upto_) == 1) {
    std::uint8_t cell[2];
    const std::uint64_t slot = kicked_upto_ % cfg_.ring_size;
    mem_.read(guest_hpa(avail_gpa_ + 4 + slot * 2), cell);
    std::uint16_t head;
    std::memcpy(&head, cell, 2);
    req = req_tag_.at(head);
  }
  kicked_upto_ = upto;
  ledger_.append(loop_.now(), cfg_.vm, EventKind::vm_exit, 4, req);
  loop_.after(costs_.exit_ps, [this, upto] { host_process_kick(upto); });
}

void VirtioVmDevice::host_process_kick(std::uint16_t upto_idx) {
  const std::uint32_t qsz = cfg_.ring_size;
  sim::Ps cursor = loop_.now();
  bool submitted = false;
  while (host_avail_seen_ != upto_idx) {
    std::uint8_t cell[2];
    mem_.read(guest_hpa(avail_gpa_ + 4 + std::uint64_t{host_avail_seen_ % qsz} * 2),
              cell);
    ++host_avail_seen_;
    std::uint16_t head;
    std::memcpy(&head, cell, 2);

    // Walk the 3-descriptor chain out of guest memory.
    VirtqDesc d[3];
    std::uint16_t id = head;
    for (int i = 0; i < 3; ++i) {
      std::uint8_t raw[16];
      mem_.read(guest_hpa(desc_gpa_ + std::uint64_t{id} * 16), raw);
      std::memcpy(&d[i].addr, raw + 0, 8);
      std::memcpy(&d[i].len, raw + 8, 4);
      std::memcpy(&d[i].flags, raw + 12, 2);
      std::memcpy(&d[i].next, raw + 14, 2);
      id = d[i].next;
    }
    std::uint8_t hdr[16];
    mem_.read(guest_hpa(d[0].addr), hdr);
    std::uint32_t type;
    std::uint64_t sector;
    std::memcpy(&type, hdr + 0, 4);
    std::memcpy(&sector, hdr + 8, 8);

    Pending p;
    p.tag = req_tag_.at(head);
    p.desc_head = head;
    p.write = type == kBlkTOut;
    p.guest_data_gpa = d[1].addr;
    p.bytes = d[1].len;
    p.status_gpa = d[2].addr;

    const std::uint64_t vlba = sector / (ctrl_.block_size() / 512);
    const std::uint32_t blocks =
        static_cast<std::uint32_t>(p.bytes / ctrl_.block_size());
    if (vlba >= cfg_.lba_size || blocks > cfg_.lba_size - vlba) {
      finish(p, kBlkStatusIoErr);  // backend-enforced isolation
      continue;
    }

    auto& [bhpa, bsz] = bounce_[head];
    if (bsz < p.bytes) {
      bhpa = mem_.alloc(p.bytes);
      bsz = mem::pages_for(p.bytes) * kPageSize;
    }
    p.bounce_hpa = bhpa;

    if (p.write) {
      // Movement 1: guest buffer into the host bounce buffer (a real copy).
      // Movement 2: bounce buffer into the device; physically that is the
      // device's DMA from the PRPs below, costed here as the second copy.
      std::vector<std::uint8_t> buf(p.bytes);
      mem_.read(guest_hpa(p.guest_data_gpa), buf);
      mem_.write(p.bounce_hpa, buf);
      charge(cursor, EventKind::data_copy, p.bytes, p.tag);
      cursor += costs_.copy_byte_ps * p.bytes;
      charge(cursor, EventKind::data_copy, p.bytes, p.tag);
      cursor += costs_.copy_byte_ps * p.bytes;
    }

    assert(!free_cids_.empty());  // in-flight <= ring/3 < host depth
    const std::uint16_t cid = free_cids_.back();
    free_cids_.pop_back();

    nvme::Command cmd;
    cmd.opcode = p.write ? nvme::kWrite : nvme::kRead;
    cmd.cid = cid;
    cmd.nsid = 1;
    cmd.set_slba(cfg_.lba_start + vlba);
    cmd.set_nlb(static_cast<std::uint16_t>(blocks - 1));
    cmd.prp1 = mem::host_iova(p.bounce_hpa);
    const std::uint64_t pages = mem::pages_for(p.bytes);
    if (pages == 2) {
      cmd.prp2 = mem::host_iova(p.bounce_hpa + kPageSize);
    } else if (pages > 2) {
      // Bounce buffers are physically contiguous, but PRPs are page lists.
      const std::uint64_t list = mem_.alloc((pages - 1) * 8);
      for (std::uint64_t e = 0; e < pages - 1; ++e)
        mem_.write_u64(list + e * 8,
                       mem::host_iova(p.bounce_hpa + (e + 1) * kPageSize));
      cmd.prp2 = mem::host_iova(list);
    }

    std::uint8_t sqe[nvme::kSqeBytes];
    cmd.encode(sqe);
    mem_.write(hsq_ + std::uint64_t{hsq_tail_} * nvme::kSqeBytes, sqe);
    hsq_tail_ = (hsq_tail_ + 1) % hdepth_;
    pending_[cid] = p;
    submitted = true;
  }
  if (submitted) {
    const std::uint32_t tail = hsq_tail_;
    loop_.at(cursor, [this, tail] {
      mem_.write_u32(ctrl_.doorbell_hpa(qid_), tail);
    });
  }
}

void VirtioVmDevice::host_reap() {
  sim::Ps cursor = loop_.now();
  bool any = false;
  while (true) {
    std::uint8_t raw[nvme::kCqeBytes];
    mem_.read(hcq_ + std::uint64_t{hcq_head_} * nvme::kCqeBytes, raw);
    const nvme::Completion comp = nvme::Completion::decode(raw);
    if (comp.phase != hcq_phase_) break;
    hcq_head_ = (hcq_head_ + 1) % hdepth_;
    if (hcq_head_ == 0) hcq_phase_ = !hcq_phase_;
    any = true;

    auto it = pending_.find(comp.cid);
    if (it == pending_.end()) {
      ledger_.append(loop_.now(), telemetry::kHostVm, EventKind::spurious,
                     comp.cid);
      continue;
    }
    Pending p = it->second;
    pending_.erase(it);
    free_cids_.push_back(comp.cid);

    if (!p.write && comp.status == nvme::kSuccess) {
      // Movements for a read land on the completion side: device into the
      // bounce buffer (the DMA that just happened), bounce into the guest.
      charge(cursor, EventKind::data_copy, p.bytes, p.tag);
      cursor += costs_.copy_byte_ps * p.bytes;
      std::vector<std::uint8_t> buf(p.bytes);
      mem_.read(p.bounce_hpa, buf);
      mem_.write(guest_hpa(p.guest_data_gpa), buf);
      charge(cursor, EventKind::data_copy, p.bytes, p.tag);
      cursor += costs_.copy_byte_ps * p.bytes;
    }
    const std::uint8_t st =
        comp.status == nvme::kSuccess ? kBlkStatusOk : kBlkStatusIoErr;
    loop_.at(cursor, [this, p, st] { finish(p, st); });
  }
  if (any) mem_.write_u32(ctrl_.doorbell_hpa(qid_) + 4, hcq_head_);
}

void VirtioVmDevice::finish(const Pending& p, std::uint8_t status) {
  const std::uint32_t qsz = cfg_.ring_size;
  const std::uint8_t st[1] = {status};
  mem_.write(guest_hpa(p.status_gpa), st);
  std::uint8_t elem[8];
  put_u32(elem + 0, p.desc_head);
  put_u32(elem + 4, static_cast<std::uint32_t>(p.bytes));
  mem_.write(guest_hpa(used_gpa_ + 4 + std::uint64_t{used_idx_ % qsz} * 8),
             elem);
  ++used_idx_;
  std::uint8_t cell[2];
  put_u16(cell, used_idx_);
  mem_.write(guest_hpa(used_gpa_ + 2), cell);

  ledger_.append(loop_.now(), cfg_.vm, EventKind::intr_injected, 0, p.tag);
  loop_.after(costs_.inject_ps, [this] { guest_complete(); });
}

void VirtioVmDevice::guest_complete() {
  const std::uint32_t qsz = cfg_.ring_size;
  while (used_seen_ != used_idx_) {
    std::uint8_t elem[8];
    mem_.read(guest_hpa(used_gpa_ + 4 + std::uint64_t{used_seen_ % qsz} * 8),
              elem);
    ++used_seen_;
    std::uint32_t head32;
    std::memcpy(&head32, elem, 4);
    const auto head = static_cast<std::uint16_t>(head32);

    std::uint8_t st[1];
    mem_.read(guest_hpa(status_gpa_[head]), st);
    const std::uint64_t tag = req_tag_.at(head);
    req_tag_.erase(head);
    free_descs_.push_back(head);
    // Chain ids are derivable from the head slot: d1/d2 were taken right
    // after d0 on submit and ride in the descriptor table.
    std::uint8_t raw[16];
    mem_.read(guest_hpa(desc_gpa_ + std::uint64_t{head} * 16), raw);
    std::uint16_t d1;
    std::memcpy(&d1, raw + 14, 2);
    mem_.read(guest_hpa(desc_gpa_ + std::uint64_t{d1} * 16), raw);
    std::uint16_t d2;
    std::memcpy(&d2, raw + 14, 2);
    free_descs_.push_back(d1);
    free_descs_.push_back(d2);
    --in_flight_;
    if (on_complete_) on_complete_(tag, st[0] == kBlkStatusOk ? 0 : 1);
  }
}

}  // namespace iovsim::baselines
