#include "iovsim/lightiov/host.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>
#include <sstream>

namespace iovsim::lightiov {

using mem::kPageSize;
using telemetry::EventKind;

LightiovHost::LightiovHost(sim::EventLoop& loop, mem::HostMemory& mem,
                           telemetry::EventLedger& ledger,
                           const telemetry::CostModel& costs,
                           mem::GpaRangeAllocator& gpa)
    : loop_(loop), mem_(mem), ledger_(ledger), costs_(costs), gpa_(gpa) {}

LightiovHost::CtrlState& LightiovHost::ctrl_state(nvme::NvmeController& ctrl) {
  auto it = ctrls_.find(ctrl.id());
  if (it != ctrls_.end()) return it->second;
  CtrlState& cs = ctrls_[ctrl.id()];
  cs.ctrl = &ctrl;
  cs.lba_free[0] = ctrl.total_blocks();
  // Chain onto any lookup already installed (other backends share the
  // controller); each link answers only for qids it owns.
  auto prev = ctrl.req_lookup;
  ctrl.req_lookup = [this, id = ctrl.id(), prev](
                        std::uint16_t sqid,
                        std::uint16_t cid) -> std::uint64_t {
    const auto& st = ctrls_.at(id);
    auto owner = st.qid_vm.find(sqid);
    if (owner == st.qid_vm.end()) return prev ? prev(sqid, cid) : 0;
    const auto& c = *vms_.at(owner->second);
    if (!c.req_lookup) return 0;
    return c.req_lookup(c.qid_index.at(sqid), cid);
  };
  return cs;
}

LightiovHost::VmContext& LightiovHost::vm_at(std::int32_t vm) {
  auto it = vms_.find(vm);
  if (it == vms_.end())
    throw std::out_of_range("vm " + std::to_string(vm) + " not provisioned");
  return *it->second;
}

const LightiovHost::VmContext& LightiovHost::vm_at(std::int32_t vm) const {
  auto it = vms_.find(vm);
  if (it == vms_.end())
    throw std::out_of_range("vm " + std::to_string(vm) + " not provisioned");
  return *it->second;
}

std::uint64_t LightiovHost::lba_alloc(CtrlState& cs, std::int32_t vm,
                                      std::uint64_t blocks) {
  for (auto it = cs.lba_free.begin(); it != cs.lba_free.end(); ++it) {
    if (it->second < blocks) continue;
    const std::uint64_t start = it->first;
    const std::uint64_t left = it->second - blocks;
    cs.lba_free.erase(it);
    if (left) cs.lba_free[start + blocks] = left;
    cs.lba_grants[vm] = {start, blocks};
    return start;
  }
  std::uint64_t largest = 0;
  for (const auto& [s, n] : cs.lba_free) largest = std::max(largest, n);
  std::ostringstream msg;
  msg << "vm " << vm << ": requested " << blocks
      << " blocks, largest free run on controller " << cs.ctrl->id() << " is "
      << largest;
  throw ProvisionError(msg.str());
}

void LightiovHost::lba_release(CtrlState& cs, std::int32_t vm) {
  auto it = cs.lba_grants.find(vm);
  if (it == cs.lba_grants.end()) return;
  auto [start, blocks] = it->second;
  cs.lba_grants.erase(it);
  auto ins = cs.lba_free.emplace(start, blocks).first;
  if (ins != cs.lba_free.begin()) {
    auto prev = std::prev(ins);
    if (prev->first + prev->second == ins->first) {
      prev->second += ins->second;
      cs.lba_free.erase(ins);
      ins = prev;
    }
  }
  auto next = std::next(ins);
  if (next != cs.lba_free.end() && ins->first + ins->second == next->first) {
    ins->second += next->second;
    cs.lba_free.erase(next);
  }
}

VmResources LightiovHost::provision_vm(std::int32_t vm,
                                       nvme::NvmeController& ctrl,
                                       std::uint16_t n_queues,
                                       std::uint64_t capacity_blocks,
                                       const ProvisionOptions& opt) {
  if (vms_.count(vm))
    throw ProvisionError("vm " + std::to_string(vm) + " already provisioned");
  if (opt.queue_depth < nvme::kMinQueueDepth)
    throw ProvisionError("queue depth below protocol minimum");
  CtrlState& cs = ctrl_state(ctrl);
  if (ctrl.free_qpairs() < n_queues) {
    std::ostringstream msg;
    msg << "vm " << vm << ": requested " << n_queues
        << " I/O pairs, controller " << ctrl.id() << " has "
        << ctrl.free_qpairs() << " free";
    throw ProvisionError(msg.str());
  }

  const std::uint64_t lba_start = lba_alloc(cs, vm, capacity_blocks);

  const std::uint64_t sq_bytes =
      mem::pages_for(std::uint64_t{opt.queue_depth} * nvme::kSqeBytes) *
      kPageSize;
  const std::uint64_t cq_bytes =
      mem::pages_for(std::uint64_t{opt.queue_depth} * nvme::kCqeBytes) *
      kPageSize;
  const std::uint64_t window_bytes = kPageSize + n_queues * (sq_bytes + cq_bytes);

  std::uint64_t window = 0;
  auto& reuse = cs.cmb_reuse[window_bytes];
  if (!reuse.empty()) {
    window = reuse.back();
    reuse.pop_back();
  } else {
    try {
      window = ctrl.cmb_alloc(window_bytes);
    } catch (const std::runtime_error& e) {
      lba_release(cs, vm);
      throw ProvisionError(std::string("vm ") + std::to_string(vm) + ": " +
                           e.what());
    }
  }

  auto ctx = std::make_unique<VmContext>();
  VmContext& c = *ctx;
  c.ctrl = &ctrl;
  VmResources& r = c.res;
  r.vm = vm;
  r.ctrl = ctrl.id();
  r.queue_depth = opt.queue_depth;
  r.cmb_window_hpa = window;
  r.cmb_window_bytes = window_bytes;
  r.lba_start = lba_start;
  r.lba_size = capacity_blocks;

  // Pairs are created now, not at guest CREATE time: the guest's admin
  // commands only bind to them. Vectors are routed posted before the CQ
  // exists so no completion can ever race an unrouted vector.
  std::uint64_t next_hpa = window + kPageSize;
  for (std::uint32_t i = 0; i < n_queues; ++i) {
    const std::uint16_t qid = ctrl.alloc_qid();
    const std::uint16_t pvec = cs.next_vector++;
    ctrl.irt().map(pvec, {vm, static_cast<std::uint16_t>(i), true});

    const std::uint64_t sq_hpa = next_hpa;
    const std::uint64_t cq_hpa = next_hpa + sq_bytes;
    next_hpa += sq_bytes + cq_bytes;

    nvme::Command cq_cmd;
    cq_cmd.opcode = nvme::kCreateIoCq;
    cq_cmd.prp1 = cq_hpa;
    cq_cmd.cdw10 = qid | ((opt.queue_depth - 1) << 16);
    cq_cmd.cdw11 = (static_cast<std::uint32_t>(pvec) << 16) | 0x2 | 0x1;
    if (ctrl.admin_execute(cq_cmd).status != nvme::kSuccess)
      throw std::logic_error("physical CREATE_IO_CQ rejected");

    nvme::Command sq_cmd;
    sq_cmd.opcode = nvme::kCreateIoSq;
    sq_cmd.prp1 = sq_hpa;
    sq_cmd.cdw10 = qid | ((opt.queue_depth - 1) << 16);
    sq_cmd.cdw11 = (static_cast<std::uint32_t>(qid) << 16) | 0x1;
    if (ctrl.admin_execute(sq_cmd).status != nvme::kSuccess)
      throw std::logic_error("physical CREATE_IO_SQ rejected");

    ctrl.set_queue_owner(qid, vm);
    cs.qid_vm[qid] = vm;
    c.qid_index[qid] = i;
    r.qids.push_back(qid);
    r.vectors.push_back(pvec);
    r.sq_hpa.push_back(sq_hpa);
    r.cq_hpa.push_back(cq_hpa);
    r.db_hpa.push_back(ctrl.doorbell_hpa(qid));
  }

  // DRAM: eagerly mapped in both tables. Only window pages fault.
  r.dram = gpa_.alloc(vm, opt.dram_bytes);
  if (r.dram.size) {
    r.dram_hpa = mem_.alloc(r.dram.size);
    const std::uint64_t pages = r.dram.size / kPageSize;
    for (std::uint64_t p = 0; p < pages; ++p) {
      c.slt.map(mem::page_of(r.dram.base) + p, mem::page_of(r.dram_hpa) + p);
      ctrl.dma().map(mem::page_of(r.dram.base) + p, mem::page_of(r.dram_hpa) + p,
                     vm);
    }
  }

  // Metadata page, written at HPA by the backend; the guest reads it through
  // the faulting window.
  mem_.write_u64(window + kMetaLbaStart, r.lba_start);
  mem_.write_u64(window + kMetaLbaSize, r.lba_size);
  mem_.write_u64(window + kMetaNQueues, n_queues);
  mem_.write_u64(window + kMetaQueueDepth, r.queue_depth);
  for (std::uint32_t i = 0; i < n_queues; ++i) {
    const std::uint64_t dir = window + kMetaDirectory + i * kMetaDirStride;
    mem_.write_u64(dir + 0, kGuestCmbGpa + (r.sq_hpa[i] - window));
    mem_.write_u64(dir + 8, kGuestCmbGpa + (r.cq_hpa[i] - window));
    mem_.write_u64(dir + 16, kGuestDbGpa + std::uint64_t{i} * kPageSize);
  }

  c.slt.set_fault_handler(
      [this, vm](std::uint64_t gpa_page) { return handle_queue_fault(vm, gpa_page); });

  c.pcie_config.assign(4096, 0);
  const std::uint32_t id_dword = 0x00101b36;  // device 0x0010, vendor 0x1b36
  const std::uint32_t class_dword = 0x01080200;  // NVM Express I/O controller
  std::memcpy(c.pcie_config.data() + 0x00, &id_dword, 4);
  std::memcpy(c.pcie_config.data() + 0x08, &class_dword, 4);
  c.cq_created.assign(n_queues + 1u, false);
  c.sq_created.assign(n_queues + 1u, false);

  vms_[vm] = std::move(ctx);
  return r;
}

bool LightiovHost::handle_queue_fault(std::int32_t vm, std::uint64_t gpa_page) {
  auto it = vms_.find(vm);
  if (it == vms_.end()) return false;
  VmContext& c = *it->second;
  const VmResources& r = c.res;
  const std::uint64_t gpa = gpa_page << mem::kPageShift;

  if (gpa >= kGuestCmbGpa && gpa < kGuestCmbGpa + r.cmb_window_bytes) {
    const std::uint64_t hpa = r.cmb_window_hpa + (gpa - kGuestCmbGpa);
    c.slt.map(gpa_page, mem::page_of(hpa));
    ledger_.append(loop_.now(), vm, EventKind::page_fault, gpa);
    return true;
  }
  const std::uint64_t db_span = r.qids.size() * kPageSize;
  if (gpa >= kGuestDbGpa && gpa < kGuestDbGpa + db_span) {
    const std::uint64_t i = (gpa - kGuestDbGpa) / kPageSize;
    c.slt.map(gpa_page, mem::page_of(r.db_hpa[i]));
    ledger_.append(loop_.now(), vm, EventKind::page_fault, gpa);
    return true;
  }
  return false;
}

std::uint64_t LightiovHost::bar0_read(VmContext& c, std::uint64_t offset,
                                      std::uint32_t width) {
  std::uint64_t v;
  switch (offset) {
    case kRegCap:
      // MQES (depth - 1) in the low 16 bits; CSS.NVM bit.
      v = (c.res.queue_depth - 1) | (1ULL << 37);
      break;
    case kRegVs:
      v = 0x00010400;  // 1.4
      break;
    case kRegCc:
      v = c.cc;
      break;
    case kRegCsts:
      v = (c.cc & 1) ? 1 : 0;  // RDY tracks EN with no model delay
      break;
    case kRegAqa:
      v = c.aqa;
      break;
    case kRegAsq:
      v = c.asq;
      break;
    case kRegAcq:
      v = c.acq;
      break;
    case kRegCmbLoc:
      v = kGuestCmbGpa;
      break;
    case kRegCmbSz:
      v = c.res.cmb_window_bytes;
      break;
    default:
      v = ~0ULL;
      break;
  }
  return width >= 8 ? v : v & ((1ULL << (8 * width)) - 1);
}

void LightiovHost::bar0_write(std::int32_t vm, VmContext& c,
                              std::uint64_t offset, std::uint64_t value) {
  switch (offset) {
    case kRegCc:
      c.cc = static_cast<std::uint32_t>(value);
      break;
    case kRegAqa:
      c.aqa = static_cast<std::uint32_t>(value);
      break;
    case kRegAsq:
      c.asq = value;
      break;
    case kRegAcq:
      c.acq = value;
      break;
    case kRegAdminSqDb:
      c.vasq_tail = static_cast<std::uint32_t>(value);
      process_virtual_admin(vm, c);
      break;
    case kRegAdminCqDb:
      // Accepted for protocol shape; the emulator reaps on submit, so the
      // guest never has to ring it.
      break;
    default:
      break;  // read-only or unknown: dropped
  }
}

std::uint64_t LightiovHost::mmio_access(std::int32_t vm, Region region,
                                        std::uint64_t offset, bool is_write,
                                        std::uint64_t value,
                                        std::uint32_t width) {
  VmContext& c = vm_at(vm);
  ledger_.append(loop_.now(), vm, EventKind::vm_exit, width);
  if (region == Region::kPcieConfig) {
    if (offset + width > c.pcie_config.size()) {
      return is_write ? 0 : (width >= 8 ? ~0ULL : (1ULL << (8 * width)) - 1);
    }
    if (is_write) {
      std::memcpy(c.pcie_config.data() + offset, &value, width);
      return 0;
    }
    std::uint64_t v = 0;
    std::memcpy(&v, c.pcie_config.data() + offset, width);
    return v;
  }
  if (offset + width > kBar0Bytes)
    return is_write ? 0 : (width >= 8 ? ~0ULL : (1ULL << (8 * width)) - 1);
  if (is_write) {
    bar0_write(vm, c, offset, value);
    return 0;
  }
  return bar0_read(c, offset, width);
}

void LightiovHost::process_virtual_admin(std::int32_t vm, VmContext& c) {
  const std::uint32_t asq_depth = (c.aqa & 0xfff) + 1;
  const std::uint32_t acq_depth = ((c.aqa >> 16) & 0xfff) + 1;
  while (c.vasq_head != c.vasq_tail) {
    std::uint8_t sqe[nvme::kSqeBytes];
    guest_read(vm, c.asq + std::uint64_t{c.vasq_head} * nvme::kSqeBytes, sqe,
               sizeof sqe);
    c.vasq_head = (c.vasq_head + 1) % asq_depth;

    nvme::Completion comp = virtual_admin(vm, nvme::Command::decode(sqe));
    comp.cid = nvme::Command::decode(sqe).cid;
    comp.sqid = nvme::kAdminQid;
    comp.sq_head = static_cast<std::uint16_t>(c.vasq_head);
    comp.phase = c.vacq_phase;
    std::uint8_t cqe[nvme::kCqeBytes];
    comp.encode(cqe);
    guest_write(vm, c.acq + std::uint64_t{c.vacq_tail} * nvme::kCqeBytes, cqe,
                sizeof cqe);
    c.vacq_tail = (c.vacq_tail + 1) % acq_depth;
    if (c.vacq_tail == 0) c.vacq_phase = !c.vacq_phase;
  }
}

nvme::Completion LightiovHost::virtual_admin(std::int32_t vm,
                                             const nvme::Command& cmd) {
  VmContext& c = vm_at(vm);
  const auto n_queues = static_cast<std::uint32_t>(c.res.qids.size());
  nvme::Completion comp;
  comp.cid = cmd.cid;
  switch (cmd.opcode) {
    case nvme::kIdentify: {
      std::uint8_t blob[nvme::kIdentifyBytes];
      std::memset(blob, 0, sizeof blob);
      const std::uint32_t cns = cmd.cdw10 & 0xff;
      if (cns == nvme::kCnsController) {
        const std::uint16_t vid = 0x1b36;
        std::memcpy(blob + nvme::kIdCtrlVidOffset, &vid, 2);
        blob[nvme::kIdCtrlMdtsOffset] = 5;
        const std::uint32_t nn = 1;
        std::memcpy(blob + nvme::kIdCtrlNnOffset, &nn, 4);
        const auto maxq = static_cast<std::uint16_t>(n_queues);
        std::memcpy(blob + kIdCtrlMaxQueuesOffset, &maxq, 2);
      } else if (cns == nvme::kCnsNamespace) {
        // The namespace the guest sees is its grant: lba_size blocks
        // starting at virtual 0.
        std::memcpy(blob + nvme::kIdNsNszeOffset, &c.res.lba_size, 8);
        std::memcpy(blob + nvme::kIdNsNcapOffset, &c.res.lba_size, 8);
        blob[nvme::kIdNsFlbasOffset] = 0;
        blob[nvme::kIdNsLbadsOffset] = static_cast<std::uint8_t>(
            c.ctrl->block_size() == 4096 ? 12 : 9);
      } else {
        comp.status = nvme::kInvalidField;
        return comp;
      }
      guest_write(vm, cmd.prp1, blob, sizeof blob);
      return comp;
    }
    case nvme::kSetFeatures: {
      if ((cmd.cdw10 & 0xff) != nvme::kFeatNumberOfQueues) {
        comp.status = nvme::kInvalidField;
        return comp;
      }
      // Zero-based counts; a queueless grant reports 0 and the guest must
      // not create anything (CREATE would fail anyway).
      const std::uint32_t zb = n_queues ? n_queues - 1 : 0;
      comp.result = zb | (zb << 16);
      return comp;
    }
    case nvme::kCreateIoCq: {
      const std::uint16_t qid = cmd.cdw10 & 0xffff;
      if (qid == 0 || qid > n_queues) {
        comp.status = nvme::kInvalidQueueIdentifier;
        return comp;
      }
      c.cq_created[qid] = true;
      comp.result = qid - 1u;  // directory slot
      return comp;
    }
    case nvme::kCreateIoSq: {
      const std::uint16_t qid = cmd.cdw10 & 0xffff;
      if (qid == 0 || qid > n_queues) {
        comp.status = nvme::kInvalidQueueIdentifier;
        return comp;
      }
      if (!c.cq_created[qid]) {
        comp.status = nvme::kCompletionQueueInvalid;
        return comp;
      }
      c.sq_created[qid] = true;
      comp.result = qid - 1u;
      return comp;
    }
    case nvme::kDeleteIoSq: {
      const std::uint16_t qid = cmd.cdw10 & 0xffff;
      if (qid == 0 || qid > n_queues) {
        comp.status = nvme::kInvalidQueueIdentifier;
        return comp;
      }
      c.sq_created[qid] = false;
      return comp;
    }
    case nvme::kDeleteIoCq: {
      const std::uint16_t qid = cmd.cdw10 & 0xffff;
      if (qid == 0 || qid > n_queues) {
        comp.status = nvme::kInvalidQueueIdentifier;
        return comp;
      }
      c.cq_created[qid] = false;
      return comp;
    }
    default:
      comp.status = nvme::kInvalidOpcode;
      return comp;
  }
}

void LightiovHost::teardown_vm(std::int32_t vm) {
  auto it = vms_.find(vm);
  if (it == vms_.end()) {
    ledger_.append(loop_.now(), vm, EventKind::spurious, 0);
    return;
  }
  it->second->draining = true;
  try_finish_teardown(vm);
}

bool LightiovHost::draining(std::int32_t vm) const {
  auto it = vms_.find(vm);
  return it != vms_.end() && it->second->draining;
}

void LightiovHost::try_finish_teardown(std::int32_t vm) {
  auto it = vms_.find(vm);
  if (it == vms_.end()) return;
  VmContext& c = *it->second;
  nvme::NvmeController& ctrl = *c.ctrl;
  if (!ctrl.quiescent_for_owner(vm)) {
    loop_.after(costs_.tick_ps, [this, vm] { try_finish_teardown(vm); });
    return;
  }
  CtrlState& cs = ctrls_.at(ctrl.id());
  for (const std::uint16_t qid : c.res.qids) {
    nvme::Command del_sq;
    del_sq.opcode = nvme::kDeleteIoSq;
    del_sq.cdw10 = qid;
    ctrl.admin_execute(del_sq);
    nvme::Command del_cq;
    del_cq.opcode = nvme::kDeleteIoCq;
    del_cq.cdw10 = qid;
    ctrl.admin_execute(del_cq);
    ctrl.free_qid(qid);
    cs.qid_vm.erase(qid);
  }
  ctrl.irt().unmap_vm(vm);
  ctrl.dma().unmap_owner(vm);
  if (c.res.dram.size) gpa_.free(vm);
  lba_release(cs, vm);
  cs.cmb_reuse[c.res.cmb_window_bytes].push_back(c.res.cmb_window_hpa);
  vms_.erase(it);
}

const VmResources& LightiovHost::resources(std::int32_t vm) const {
  return vm_at(vm).res;
}

std::optional<std::uint64_t> LightiovHost::translate(std::int32_t vm,
                                                     std::uint64_t gpa) {
  return vm_at(vm).slt.translate(gpa);
}

void LightiovHost::guest_write(std::int32_t vm, std::uint64_t gpa,
                               const void* src, std::uint64_t n) {
  auto* p = static_cast<const std::uint8_t*>(src);
  VmContext& c = vm_at(vm);
  while (n) {
    const std::uint64_t take =
        std::min<std::uint64_t>(n, kPageSize - (gpa & (kPageSize - 1)));
    auto hpa = c.slt.translate(gpa);
    if (!hpa) throw std::runtime_error("guest store to unmapped gpa");
    mem_.write(*hpa, {p, static_cast<std::size_t>(take)});
    gpa += take;
    p += take;
    n -= take;
  }
}

void LightiovHost::guest_read(std::int32_t vm, std::uint64_t gpa, void* dst,
                              std::uint64_t n) {
  auto* p = static_cast<std::uint8_t*>(dst);
  VmContext& c = vm_at(vm);
  while (n) {
    const std::uint64_t take =
        std::min<std::uint64_t>(n, kPageSize - (gpa & (kPageSize - 1)));
    auto hpa = c.slt.translate(gpa);
    if (!hpa) throw std::runtime_error("guest load from unmapped gpa");
    mem_.read(*hpa, {p, static_cast<std::size_t>(take)});
    gpa += take;
    p += take;
    n -= take;
  }
}

void LightiovHost::guest_write_u32(std::int32_t vm, std::uint64_t gpa,
                                   std::uint32_t v) {
  auto hpa = vm_at(vm).slt.translate(gpa);
  if (!hpa) throw std::runtime_error("guest store to unmapped gpa");
  mem_.write_u32(*hpa, v);
}

void LightiovHost::guest_write_u64(std::int32_t vm, std::uint64_t gpa,
                                   std::uint64_t v) {
  auto hpa = vm_at(vm).slt.translate(gpa);
  if (!hpa) throw std::runtime_error("guest store to unmapped gpa");
  mem_.write_u64(*hpa, v);
}

std::uint32_t LightiovHost::guest_read_u32(std::int32_t vm, std::uint64_t gpa) {
  auto hpa = vm_at(vm).slt.translate(gpa);
  if (!hpa) throw std::runtime_error("guest load from unmapped gpa");
  return mem_.read_u32(*hpa);
}

std::uint64_t LightiovHost::guest_read_u64(std::int32_t vm, std::uint64_t gpa) {
  auto hpa = vm_at(vm).slt.translate(gpa);
  if (!hpa) throw std::runtime_error("guest load from unmapped gpa");
  return mem_.read_u64(*hpa);
}

void LightiovHost::set_req_lookup(std::int32_t vm, ReqLookup fn) {
  vm_at(vm).req_lookup = std::move(fn);
}

void LightiovHost::set_guest_isr(std::int32_t vm, std::uint32_t queue_index,
                                 std::function<void()> fn) {
  VmContext& c = vm_at(vm);
  c.ctrl->irt().set_guest_handler(vm, static_cast<std::uint16_t>(queue_index),
                                  std::move(fn));
}

std::uint64_t LightiovHost::vm_fault_count(std::int32_t vm) const {
  return vm_at(vm).slt.fault_count();
}

std::size_t LightiovHost::vm_mapped_pages(std::int32_t vm) const {
  return vm_at(vm).slt.mapped_pages();
}

void LightiovHost::manifest(std::ostream& os) const {
  for (const auto& [vm, ctx] : vms_) {
    const VmResources& r = ctx->res;
    os << "vm=" << vm << " ctrl=" << r.ctrl << " lba_start=" << r.lba_start
       << " lba_size=" << r.lba_size << " queue_depth=" << r.queue_depth
       << " qids=[";
    for (std::size_t i = 0; i < r.qids.size(); ++i)
      os << (i ? "," : "") << r.qids[i];
    os << "] vectors=[";
    for (std::size_t i = 0; i < r.vectors.size(); ++i)
      os << (i ? "," : "") << r.vectors[i];
    os << "] cmb_hpa=" << r.cmb_window_hpa
       << " cmb_bytes=" << r.cmb_window_bytes << " dram_gpa=" << r.dram.base
       << " dram_bytes=" << r.dram.size << '\n';
  }
}

}  // namespace iovsim::lightiov
