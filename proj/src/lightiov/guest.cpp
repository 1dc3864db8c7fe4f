#include "iovsim/lightiov/guest.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace iovsim::lightiov {

using mem::kPageSize;

namespace {
nvme::Completion require_ok(nvme::Completion c, const char* what) {
  if (c.status != nvme::kSuccess)
    throw std::runtime_error(std::string(what) + " failed, nvme status " +
                             std::to_string(c.status));
  return c;
}
}  // namespace

std::uint64_t GuestDriver::alloc_guest(std::uint64_t bytes) {
  const std::uint64_t base = gpa_next_;
  const std::uint64_t sz = mem::pages_for(bytes) * kPageSize;
  if (base + sz > gpa_end_)
    throw std::runtime_error("guest dram exhausted");
  gpa_next_ += sz;
  return base;
}

std::uint64_t GuestDriver::reg_read(std::uint64_t offset, std::uint32_t width) {
  return host_.mmio_access(vm_, Region::kBar0, offset, false, 0, width);
}

void GuestDriver::reg_write(std::uint64_t offset, std::uint64_t value,
                            std::uint32_t width) {
  host_.mmio_access(vm_, Region::kBar0, offset, true, value, width);
}

nvme::Completion GuestDriver::admin(nvme::Command cmd) {
  cmd.cid = admin_cid_++;
  std::uint8_t sqe[nvme::kSqeBytes];
  cmd.encode(sqe);
  host_.guest_write(vm_, asq_gpa_ + std::uint64_t{asq_tail_} * nvme::kSqeBytes,
                    sqe, sizeof sqe);
  asq_tail_ = (asq_tail_ + 1) % asq_depth_;
  reg_write(kRegAdminSqDb, asq_tail_, 4);  // the one exit per admin command

  // The emulator completes synchronously, so a single poll of the virtual
  // ACQ (a plain DRAM read, no exit) must find the entry.
  std::uint8_t cqe[nvme::kCqeBytes];
  host_.guest_read(vm_, acq_gpa_ + std::uint64_t{acq_head_} * nvme::kCqeBytes,
                   cqe, sizeof cqe);
  nvme::Completion comp = nvme::Completion::decode(cqe);
  if (comp.phase != acq_phase_)
    throw std::logic_error("virtual admin completion missing");
  acq_head_ = (acq_head_ + 1) % acq_depth_;
  if (acq_head_ == 0) acq_phase_ = !acq_phase_;
  if (comp.cid != cmd.cid)
    throw std::logic_error("virtual admin completion out of order");
  return comp;
}

std::uint32_t GuestDriver::init(std::uint32_t want_queues) {
  const VmResources& grant = host_.resources(vm_);  // throws if unprovisioned
  gpa_base_ = grant.dram.base;
  gpa_size_ = grant.dram.size;
  gpa_next_ = grant.dram.base;
  gpa_end_ = grant.dram.end();

  // Boot-time config sniffing: ids, class code, BAR probe.
  host_.mmio_access(vm_, Region::kPcieConfig, 0x00, false, 0, 4);
  host_.mmio_access(vm_, Region::kPcieConfig, 0x08, false, 0, 4);
  host_.mmio_access(vm_, Region::kPcieConfig, 0x10, false, 0, 4);

  const std::uint64_t cap = reg_read(kRegCap, 8);
  reg_read(kRegVs, 4);
  queue_depth_ = static_cast<std::uint32_t>(cap & 0xffff) + 1;

  asq_depth_ = 32;
  acq_depth_ = 32;
  asq_gpa_ = alloc_guest(std::uint64_t{asq_depth_} * nvme::kSqeBytes);
  acq_gpa_ = alloc_guest(std::uint64_t{acq_depth_} * nvme::kCqeBytes);
  reg_write(kRegAqa, ((acq_depth_ - 1) << 16) | (asq_depth_ - 1), 4);
  reg_write(kRegAsq, asq_gpa_, 8);
  reg_write(kRegAcq, acq_gpa_, 8);
  reg_write(kRegCc, 1, 4);
  if (reg_read(kRegCsts, 4) != 1)
    throw std::runtime_error("controller did not become ready");

  const std::uint64_t cmb_gpa = reg_read(kRegCmbLoc, 8);
  reg_read(kRegCmbSz, 8);

  const std::uint64_t id_buf = alloc_guest(nvme::kIdentifyBytes);
  nvme::Command ident;
  ident.opcode = nvme::kIdentify;
  ident.prp1 = id_buf;
  ident.cdw10 = nvme::kCnsController;
  require_ok(admin(ident), "IDENTIFY controller");
  std::uint8_t blob[nvme::kIdentifyBytes];
  host_.guest_read(vm_, id_buf, blob, sizeof blob);
  std::uint16_t granted = 0;
  std::memcpy(&granted, blob + kIdCtrlMaxQueuesOffset, 2);
  max_transfer_bytes_ = (1u << blob[nvme::kIdCtrlMdtsOffset]) * kPageSize;

  ident.cdw10 = nvme::kCnsNamespace;
  ident.nsid = 1;
  require_ok(admin(ident), "IDENTIFY namespace");
  host_.guest_read(vm_, id_buf, blob, sizeof blob);
  std::uint64_t nsze = 0;
  std::memcpy(&nsze, blob + nvme::kIdNsNszeOffset, 8);
  block_size_ = 1u << blob[nvme::kIdNsLbadsOffset];

  nvme::Command feat;
  feat.opcode = nvme::kSetFeatures;
  feat.cdw10 = nvme::kFeatNumberOfQueues;
  feat.cdw11 = granted ? ((granted - 1u) | ((granted - 1u) << 16)) : 0;
  require_ok(admin(feat), "SET_FEATURES");

  // The LBA bounds live in the CMB metadata cell; this read is the first
  // touch of the window (one fault), not an exit.
  lba_start_ = host_.guest_read_u64(vm_, cmb_gpa + kMetaLbaStart);
  lba_size_ = host_.guest_read_u64(vm_, cmb_gpa + kMetaLbaSize);
  if (lba_size_ != nsze)
    throw std::runtime_error("namespace size disagrees with CMB metadata");

  std::uint32_t n = granted;
  if (want_queues && want_queues < n) n = want_queues;
  queues_.clear();
  queues_.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint16_t gqid = static_cast<std::uint16_t>(i + 1);
    nvme::Command mk;
    mk.opcode = nvme::kCreateIoCq;
    mk.cdw10 = gqid;
    const std::uint32_t slot =
        require_ok(admin(mk), "CREATE_IO_CQ").result;
    mk.opcode = nvme::kCreateIoSq;
    require_ok(admin(mk), "CREATE_IO_SQ");

    const std::uint64_t dir = cmb_gpa + kMetaDirectory + slot * kMetaDirStride;
    QueueState q;
    q.sq_gpa = host_.guest_read_u64(vm_, dir + 0);
    q.cq_gpa = host_.guest_read_u64(vm_, dir + 8);
    q.db_gpa = host_.guest_read_u64(vm_, dir + 16);
    q.depth = queue_depth_;
    q.free_cids.reserve(q.depth);
    for (std::uint32_t cidv = q.depth; cidv-- > 0;)
      q.free_cids.push_back(static_cast<std::uint16_t>(cidv));
    q.prp_page.assign(q.depth, 0);
    queues_.push_back(std::move(q));

    host_.set_guest_isr(vm_, i, [this, i] {
      for (auto& [tag, status] : poll_completions(i))
        if (on_complete_) on_complete_(tag, status);
    });
  }
  initialized_ = true;
  return n;
}

SubmitResult GuestDriver::submit(std::uint32_t queue, const GuestIoRequest& req,
                                 std::uint16_t* cid_out) {
  if (!initialized_) throw std::logic_error("driver not initialized");
  QueueState& q = queues_.at(queue);
  // Ring producer rule: one slot is always left open.
  if (q.outstanding.size() + 1 >= q.depth) return SubmitResult::kQueueFull;

  // Local validation, in order: virtual LBA range, then PRP pages against
  // the VM's own grant. A rejected request never reaches the wire.
  if (req.blocks == 0 || req.vlba >= lba_size_ ||
      req.blocks > lba_size_ - req.vlba)
    return SubmitResult::kRangeError;
  const std::uint64_t bytes = std::uint64_t{req.blocks} * block_size_;
  if (bytes > max_transfer_bytes_) return SubmitResult::kPrpError;
  const std::uint64_t first_page = mem::page_of(req.buffer_gpa);
  const std::uint64_t last_page = mem::page_of(req.buffer_gpa + bytes - 1);
  if (last_page != first_page && (req.buffer_gpa & (kPageSize - 1)))
    return SubmitResult::kPrpError;
  for (std::uint64_t p = first_page; p <= last_page; ++p) {
    const std::uint64_t page_gpa = p << mem::kPageShift;
    if (page_gpa < gpa_base_ || page_gpa >= gpa_base_ + gpa_size_)
      return SubmitResult::kPrpError;
  }

  const std::uint16_t cid = q.free_cids.back();
  q.free_cids.pop_back();

  nvme::Command cmd;
  cmd.opcode = req.write ? nvme::kWrite : nvme::kRead;
  cmd.cid = cid;
  cmd.nsid = 1;
  cmd.set_slba(lba_start_ + req.vlba);  // the offset rewrite
  cmd.set_nlb(static_cast<std::uint16_t>(req.blocks - 1));
  cmd.prp1 = req.buffer_gpa;
  const std::uint64_t pages = last_page - first_page + 1;
  if (pages == 2) {
    cmd.prp2 = (first_page + 1) << mem::kPageShift;
  } else if (pages > 2) {
    if (q.prp_page[cid] == 0) q.prp_page[cid] = alloc_guest(kPageSize);
    std::vector<std::uint8_t> list((pages - 1) * 8);
    for (std::uint64_t e = 0; e < pages - 1; ++e) {
      const std::uint64_t entry = (first_page + 1 + e) << mem::kPageShift;
      std::memcpy(list.data() + e * 8, &entry, 8);
    }
    host_.guest_write(vm_, q.prp_page[cid], list.data(), list.size());
    cmd.prp2 = q.prp_page[cid];
  }

  std::uint8_t sqe[nvme::kSqeBytes];
  cmd.encode(sqe);
  host_.guest_write(vm_, q.sq_gpa + std::uint64_t{q.sq_tail} * nvme::kSqeBytes,
                    sqe, sizeof sqe);
  q.sq_tail = (q.sq_tail + 1) % q.depth;
  q.outstanding[cid] = req.tag;
  // The doorbell store lands on the mapped page and reaches the device as a
  // posted write: no exit on this path, ever.
  host_.guest_write_u32(vm_, q.db_gpa + 0, q.sq_tail);
  if (cid_out) *cid_out = cid;
  return SubmitResult::kOk;
}

std::vector<std::pair<std::uint64_t, std::uint16_t>>
GuestDriver::poll_completions(std::uint32_t queue) {
  QueueState& q = queues_.at(queue);
  std::vector<std::pair<std::uint64_t, std::uint16_t>> done;
  while (true) {
    std::uint8_t cqe[nvme::kCqeBytes];
    host_.guest_read(vm_, q.cq_gpa + std::uint64_t{q.cq_head} * nvme::kCqeBytes,
                     cqe, sizeof cqe);
    const nvme::Completion comp = nvme::Completion::decode(cqe);
    if (comp.phase != q.phase) break;  // not ours yet
    q.cq_head = (q.cq_head + 1) % q.depth;
    if (q.cq_head == 0) q.phase = !q.phase;
    auto it = q.outstanding.find(comp.cid);
    if (it == q.outstanding.end()) {
      // Completion for a command we never issued: simulator bug trap.
      host_.ledger().append(host_.loop().now(), vm_,
                            telemetry::EventKind::spurious, comp.cid);
      continue;
    }
    done.emplace_back(it->second, comp.status);
    q.outstanding.erase(it);
    q.free_cids.push_back(comp.cid);
  }
  if (!done.empty()) host_.guest_write_u32(vm_, q.db_gpa + 4, q.cq_head);
  return done;
}

}  // namespace iovsim::lightiov
