#include "iovsim/nvme/controller.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>
#include <stdexcept>

namespace iovsim::nvme {

using mem::kPageSize;
using telemetry::EventKind;

NvmeController::NvmeController(sim::EventLoop& loop, mem::HostMemory& mem,
                               telemetry::EventLedger& ledger,
                               const telemetry::CostModel& costs,
                               std::unique_ptr<BackingStore> store,
                               ControllerConfig cfg)
    : loop_(loop),
      mem_(mem),
      ledger_(ledger),
      costs_(costs),
      store_(std::move(store)),
      cfg_(cfg),
      irt_(loop, ledger, costs) {
  if (cfg_.block_size != 512 && cfg_.block_size != 4096)
    throw std::runtime_error("unsupported block size");
  // Doorbell window: one page per qid so distinct queues can be granted to
  // distinct VMs without sharing a page.
  db_base_ = mem_.alloc((static_cast<std::uint64_t>(cfg_.max_io_qpairs) + 1) *
                        kPageSize);
  cmb_base_ = mem_.alloc(cfg_.cmb_bytes);
  cmb_next_ = cmb_base_;
  mem_.add_write_hook(
      db_base_,
      (static_cast<std::uint64_t>(cfg_.max_io_qpairs) + 1) * kPageSize,
      [this](std::uint64_t hpa, std::uint64_t value, std::uint32_t) {
        const std::uint64_t off = hpa - db_base_;
        const auto qid = static_cast<std::uint16_t>(off / kPageSize);
        if ((off & (kPageSize - 1)) == 0)
          ring_sq_doorbell(qid, static_cast<std::uint32_t>(value));
        else if ((off & (kPageSize - 1)) == 4)
          ring_cq_doorbell(qid, static_cast<std::uint32_t>(value));
      });
}

void NvmeController::set_admin_queues(std::uint64_t asq_hpa, std::uint64_t acq_hpa,
                                      std::uint32_t depth) {
  if (depth < kMinQueueDepth) throw std::runtime_error("admin queue too small");
  asq_ = asq_hpa;
  acq_ = acq_hpa;
  admin_depth_ = depth;
  asq_tail_ = 0;
  admin_sq_ = SqState{};
  admin_sq_.qid = kAdminQid;
  admin_sq_.depth = depth;
  admin_sq_.base = asq_hpa;
  admin_cq_ = CqState{};
  admin_cq_.qid = kAdminQid;
  admin_cq_.depth = depth;
  admin_cq_.base = acq_hpa;
  acq_reap_head_ = 0;
  acq_reap_phase_ = true;
}

void NvmeController::enable() {
  if (!admin_depth_) throw std::runtime_error("admin queues not configured");
  enabled_ = true;  // CC.EN=1 -> CSTS.RDY=1
}

std::uint64_t NvmeController::cmb_alloc(std::uint64_t bytes) {
  const std::uint64_t base = cmb_next_;
  const std::uint64_t sz = mem::pages_for(bytes) * kPageSize;
  if (base + sz > cmb_base_ + cfg_.cmb_bytes)
    throw std::runtime_error("controller memory buffer exhausted");
  cmb_next_ += sz;
  return base;
}

void NvmeController::set_host_isr(std::uint16_t vector, std::function<void()> isr) {
  host_isr_[vector] = std::move(isr);
}

std::uint16_t NvmeController::alloc_qid() {
  if (!free_qids_.empty()) {
    const std::uint16_t q = free_qids_.back();
    free_qids_.pop_back();
    return q;
  }
  if (next_qid_ > cfg_.max_io_qpairs)
    throw std::runtime_error("controller qid space exhausted");
  return next_qid_++;
}

void NvmeController::free_qid(std::uint16_t qid) { free_qids_.push_back(qid); }

void NvmeController::set_queue_owner(std::uint16_t qid, std::int32_t vm) {
  auto s = sqs_.find(qid);
  if (s != sqs_.end()) s->second.owner = vm;
  auto c = cqs_.find(qid);
  if (c != cqs_.end()) c->second.owner = vm;
}

const SqState* NvmeController::sq(std::uint16_t qid) const {
  if (qid == kAdminQid) return &admin_sq_;
  auto it = sqs_.find(qid);
  return it == sqs_.end() ? nullptr : &it->second;
}

const CqState* NvmeController::cq(std::uint16_t qid) const {
  if (qid == kAdminQid) return &admin_cq_;
  auto it = cqs_.find(qid);
  return it == cqs_.end() ? nullptr : &it->second;
}

std::size_t NvmeController::io_sq_count() const { return sqs_.size(); }

bool NvmeController::quiescent_for_owner(std::int32_t vm) const {
  if (busy_ && in_service_owner_ == vm) return false;
  for (const auto& [qid, sq] : sqs_) {
    if (sq.owner != vm) continue;
    if (sq.tail != sq.head) return false;
    const auto it = cqs_.find(sq.cqid);
    if (it != cqs_.end() && !it->second.parked.empty()) return false;
  }
  return true;
}

Completion NvmeController::admin_execute(const Command& cmd) {
  if (!admin_depth_) throw std::runtime_error("admin queues not configured");
  // asq_tail_ is the host driver's producer cursor; admin_sq_.tail is the
  // device's and only moves when the doorbell lands.
  // SQ producer rule: (tail + 1) % depth == head means full. Admin commands
  // are issued one at a time here, so this never triggers in practice.
  if ((asq_tail_ + 1) % admin_depth_ == admin_sq_.head)
    throw std::runtime_error("admin submission queue full");
  std::uint8_t sqe[kSqeBytes];
  cmd.encode(sqe);
  mem_.write(asq_ + static_cast<std::uint64_t>(asq_tail_) * kSqeBytes, sqe);
  asq_tail_ = (asq_tail_ + 1) % admin_depth_;
  ring_sq_doorbell(kAdminQid, asq_tail_);

  // Reap synchronously (admin completions are polled).
  std::uint8_t cqe[kCqeBytes];
  mem_.read(acq_ + static_cast<std::uint64_t>(acq_reap_head_) * kCqeBytes, cqe);
  Completion c = Completion::decode(cqe);
  if (c.phase != acq_reap_phase_)
    throw std::runtime_error("admin completion missing");
  acq_reap_head_ = (acq_reap_head_ + 1) % admin_depth_;
  if (acq_reap_head_ == 0) acq_reap_phase_ = !acq_reap_phase_;
  ring_cq_doorbell(kAdminQid, acq_reap_head_);
  return c;
}

void NvmeController::ring_sq_doorbell(std::uint16_t qid, std::uint32_t value) {
  SqState* sq = qid == kAdminQid ? &admin_sq_
                                 : (sqs_.count(qid) ? &sqs_[qid] : nullptr);
  if (!sq || sq->depth == 0) {
    ledger_.append(loop_.now(), telemetry::kHostVm, EventKind::spurious, qid);
    return;  // unknown queue: ignored
  }
  ledger_.append(loop_.now(), sq->owner, EventKind::doorbell, value);
  if (value >= sq->depth) {
    sq->fatal = true;  // malformed doorbell: queue enters a fatal error state
    return;
  }
  if (value == sq->tail) return;  // no new entries
  sq->tail = value;
  if (qid == kAdminQid) {
    process_admin();
    return;
  }
  if (!sq->fatal && !sq->in_ready) {
    sq->in_ready = true;
    arb_.push_back(qid);
  }
  try_start();
}

void NvmeController::ring_cq_doorbell(std::uint16_t qid, std::uint32_t value) {
  CqState* cq = qid == kAdminQid ? &admin_cq_
                                 : (cqs_.count(qid) ? &cqs_[qid] : nullptr);
  if (!cq || cq->depth == 0) {
    ledger_.append(loop_.now(), telemetry::kHostVm, EventKind::spurious, qid);
    return;
  }
  if (value >= cq->depth) {
    cq->fatal = true;
    return;
  }
  const std::uint32_t released = (value + cq->depth - cq->head) % cq->depth;
  cq->head = value;
  cq->released_abs += released;
  if (cq->head == cq->tail) cq->irq_pending = false;  // line deasserted
  // Space opened: post completions that were waiting for it.
  while (!cq->parked.empty() && cq->occupancy() < cq->depth) {
    auto [c, req] = cq->parked.front();
    cq->parked.pop_front();
    post_completion(*cq, c, req);
  }
}

void NvmeController::process_admin() {
  while (admin_sq_.head != admin_sq_.tail) {
    std::uint8_t sqe[kSqeBytes];
    mem_.read(asq_ + static_cast<std::uint64_t>(admin_sq_.head) * kSqeBytes, sqe);
    admin_sq_.head = (admin_sq_.head + 1) % admin_sq_.depth;
    Command cmd = Command::decode(sqe);
    Completion c = execute_admin(cmd);
    c.cid = cmd.cid;
    c.sqid = kAdminQid;
    c.sq_head = static_cast<std::uint16_t>(admin_sq_.head);
    post_completion(admin_cq_, c, 0);
  }
}

Completion NvmeController::execute_admin(const Command& cmd) {
  Completion c;
  switch (cmd.opcode) {
    case kCreateIoCq: {
      const std::uint16_t qid = cmd.cdw10 & 0xffff;
      const std::uint32_t depth = (cmd.cdw10 >> 16) + 1;
      if (qid == kAdminQid || qid > cfg_.max_io_qpairs || cqs_.count(qid)) {
        c.status = kInvalidQueueIdentifier;
        return c;
      }
      if (depth < kMinQueueDepth) {
        c.status = kInvalidField;
        return c;
      }
      CqState cq;
      cq.qid = qid;
      cq.depth = depth;
      cq.base = cmd.prp1;
      cq.has_vector = (cmd.cdw11 & 0x2) != 0;  // IEN
      cq.vector = static_cast<std::uint16_t>(cmd.cdw11 >> 16);
      cqs_[qid] = cq;
      return c;
    }
    case kCreateIoSq: {
      const std::uint16_t qid = cmd.cdw10 & 0xffff;
      const std::uint32_t depth = (cmd.cdw10 >> 16) + 1;
      const std::uint16_t cqid = static_cast<std::uint16_t>(cmd.cdw11 >> 16);
      if (qid == kAdminQid || qid > cfg_.max_io_qpairs || sqs_.count(qid)) {
        c.status = kInvalidQueueIdentifier;
        return c;
      }
      if (depth < kMinQueueDepth) {
        c.status = kInvalidField;
        return c;
      }
      if (!cqs_.count(cqid)) {
        c.status = kCompletionQueueInvalid;
        return c;
      }
      SqState sq;
      sq.qid = qid;
      sq.depth = depth;
      sq.base = cmd.prp1;
      sq.cqid = cqid;
      sqs_[qid] = sq;
      return c;
    }
    case kDeleteIoSq: {
      const std::uint16_t qid = cmd.cdw10 & 0xffff;
      if (!sqs_.count(qid)) {
        c.status = kInvalidQueueIdentifier;
        return c;
      }
      sqs_.erase(qid);
      arb_.erase(std::remove(arb_.begin(), arb_.end(), qid), arb_.end());
      return c;
    }
    case kDeleteIoCq: {
      const std::uint16_t qid = cmd.cdw10 & 0xffff;
      if (!cqs_.count(qid)) {
        c.status = kInvalidQueueIdentifier;
        return c;
      }
      for (const auto& [sqid, sq] : sqs_)
        if (sq.cqid == qid) {  // still referenced
          c.status = kInvalidQueueIdentifier;
          return c;
        }
      cqs_.erase(qid);
      return c;
    }
    case kIdentify: {
      std::uint8_t blob[kIdentifyBytes];
      std::memset(blob, 0, sizeof blob);
      const std::uint32_t cns = cmd.cdw10 & 0xff;
      if (cns == kCnsController) {
        const std::uint16_t vid = 0x1b36;
        std::memcpy(blob + kIdCtrlVidOffset, &vid, 2);
        blob[kIdCtrlMdtsOffset] = 5;  // 32 pages = 128 KiB max transfer
        const std::uint32_t nn = 1;
        std::memcpy(blob + kIdCtrlNnOffset, &nn, 4);
      } else if (cns == kCnsNamespace) {
        const std::uint64_t nsze = cfg_.total_blocks;
        std::memcpy(blob + kIdNsNszeOffset, &nsze, 8);
        std::memcpy(blob + kIdNsNcapOffset, &nsze, 8);
        blob[kIdNsFlbasOffset] = 0;
        blob[kIdNsLbadsOffset] =
            static_cast<std::uint8_t>(cfg_.block_size == 4096 ? 12 : 9);
      } else {
        c.status = kInvalidField;
        return c;
      }
      if (cmd.prp1 & 0x3) {
        c.status = kInvalidField;
        return c;
      }
      auto hpa = dma_.translate(cmd.prp1);
      if (!hpa) {
        ledger_.append(loop_.now(), telemetry::kHostVm, EventKind::dma_fault,
                       cmd.prp1);
        c.status = kDataTransferError;
        return c;
      }
      mem_.write(*hpa, blob);
      return c;
    }
    case kSetFeatures: {
      const std::uint32_t fid = cmd.cdw10 & 0xff;
      if (fid != kFeatNumberOfQueues) {
        c.status = kInvalidField;
        return c;
      }
      const std::uint32_t want_sq = (cmd.cdw11 & 0xffff) + 1;
      const std::uint32_t want_cq = (cmd.cdw11 >> 16) + 1;
      const std::uint32_t got_sq =
          std::min<std::uint32_t>(want_sq, cfg_.max_io_qpairs);
      const std::uint32_t got_cq =
          std::min<std::uint32_t>(want_cq, cfg_.max_io_qpairs);
      c.result = (got_sq - 1) | ((got_cq - 1) << 16);
      return c;
    }
    default:
      c.status = kInvalidOpcode;
      return c;
  }
}

void NvmeController::try_start() {
  if (!enabled_) return;
  while (!busy_ && !arb_.empty()) {
    const std::uint16_t qid = arb_.front();
    arb_.pop_front();
    auto it = sqs_.find(qid);
    if (it == sqs_.end()) continue;
    SqState& sq = it->second;
    if (sq.fatal || sq.head == sq.tail) {
      sq.in_ready = false;
      continue;
    }
    std::uint8_t sqe[kSqeBytes];
    mem_.read(sq.base + static_cast<std::uint64_t>(sq.head) * kSqeBytes, sqe);
    sq.head = (sq.head + 1) % sq.depth;
    sq.fetched_abs++;
    const Command cmd = Command::decode(sqe);
    // Round-robin across ready queues: one command, then back of the line.
    if (sq.head != sq.tail)
      arb_.push_back(qid);
    else
      sq.in_ready = false;

    const std::uint64_t req = req_lookup ? req_lookup(qid, cmd.cid) : 0;
    if (cfg_.fetch_log_enabled)
      fetch_log_.push_back(
          FetchRecord{qid, cmd.cid, cmd.opcode, cmd.slba(), cmd.blocks()});
    const std::uint64_t bytes =
        (cmd.opcode == kRead || cmd.opcode == kWrite)
            ? static_cast<std::uint64_t>(cmd.blocks()) * cfg_.block_size
            : 0;
    ledger_.append(loop_.now(), sq.owner, EventKind::device_service, bytes, req);
    busy_ = true;
    in_service_owner_ = sq.owner;
    in_service_sqid_ = qid;
    loop_.after(costs_.service(bytes),
                [this, qid, cmd, req] { complete_command(qid, cmd, req); });
  }
}

void NvmeController::complete_command(std::uint16_t sqid, const Command& cmd,
                                      std::uint64_t req) {
  auto it = sqs_.find(sqid);
  if (it == sqs_.end()) {  // queue deleted mid-flight; drop silently
    busy_ = false;
    try_start();
    return;
  }
  SqState& sq = it->second;
  const IoResult r = execute_io(cmd, sq.owner, req);
  Completion c;
  c.cid = cmd.cid;
  c.sqid = sqid;
  c.sq_head = static_cast<std::uint16_t>(sq.head);
  c.status = r.status;
  auto cqit = cqs_.find(sq.cqid);
  if (cqit != cqs_.end()) post_completion(cqit->second, c, req);
  busy_ = false;
  try_start();
}

void NvmeController::post_completion(CqState& cq, Completion c, std::uint64_t req) {
  if (cq.occupancy() >= cq.depth) {
    cq.parked.emplace_back(c, req);
    cq.deferred_total++;
    return;
  }
  c.phase = cq.phase;
  std::uint8_t cqe[kCqeBytes];
  c.encode(cqe);
  mem_.write(cq.base + static_cast<std::uint64_t>(cq.tail) * kCqeBytes, cqe);
  cq.tail = (cq.tail + 1) % cq.depth;
  if (cq.tail == 0) cq.phase = !cq.phase;
  cq.posted_abs++;
  raise_for_cq(cq, req);
}

void NvmeController::raise_for_cq(CqState& cq, std::uint64_t req) {
  if (!cq.has_vector) return;  // poll-mode queue
  cq.irq_pending = true;
  if (irt_.routed(cq.vector)) {
    irt_.raise(cq.vector, req);
    return;
  }
  auto it = host_isr_.find(cq.vector);
  if (it != host_isr_.end()) {
    const auto isr = it->second;
    loop_.after(0, isr);
    return;
  }
  ledger_.append(loop_.now(), telemetry::kHostVm, EventKind::spurious, cq.vector,
                 req);
}

std::uint16_t NvmeController::gather_pages(
    const Command& cmd, std::uint64_t bytes,
    std::vector<std::pair<std::uint64_t, std::uint32_t>>& segs,
    std::uint32_t& list_entries, std::int32_t owner, std::uint64_t req) {
  list_entries = 0;
  if (cmd.prp1 & 0x3) return kInvalidField;  // prp1 must be dword-aligned

  std::vector<std::uint64_t> dma_pages;  // (addr, take) pairs derived below
  const std::uint64_t off1 = cmd.prp1 & (kMemPage - 1);
  const std::uint64_t first = std::min<std::uint64_t>(bytes, kMemPage - off1);
  const std::uint64_t rest = bytes - first;
  const std::uint64_t more = (rest + kMemPage - 1) / kMemPage;

  std::vector<std::pair<std::uint64_t, std::uint32_t>> dma_segs;
  dma_segs.emplace_back(cmd.prp1, static_cast<std::uint32_t>(first));
  if (more == 1) {
    if (cmd.prp2 & (kMemPage - 1)) return kInvalidField;
    dma_segs.emplace_back(cmd.prp2, static_cast<std::uint32_t>(rest));
  } else if (more > 1) {
    // PRP list: one level, entries must fit a single page.
    if (cmd.prp2 & (kMemPage - 1)) return kInvalidField;
    if (more > kMemPage / 8) return kInvalidField;
    auto list_hpa = dma_.translate(cmd.prp2);
    if (!list_hpa) {
      ledger_.append(loop_.now(), owner, EventKind::dma_fault, cmd.prp2, req);
      return kDataTransferError;
    }
    std::vector<std::uint8_t> raw(more * 8);
    mem_.read(*list_hpa, raw);
    std::uint64_t left = rest;
    for (std::uint64_t i = 0; i < more; ++i) {
      std::uint64_t entry;
      std::memcpy(&entry, raw.data() + i * 8, 8);
      ++list_entries;
      if (entry & (kMemPage - 1)) return kInvalidField;
      const auto take = static_cast<std::uint32_t>(
          std::min<std::uint64_t>(left, kMemPage));
      dma_segs.emplace_back(entry, take);
      left -= take;
    }
  }

  for (const auto& [addr, len] : dma_segs) {
    auto hpa = dma_.translate(addr);
    if (!hpa) {
      ledger_.append(loop_.now(), owner, EventKind::dma_fault, addr, req);
      return kDataTransferError;
    }
    segs.emplace_back(*hpa, len);
  }
  return kSuccess;
}

IoResult NvmeController::execute_io(const Command& cmd, std::int32_t owner,
                                    std::uint64_t req) {
  IoResult r;
  if (cmd.opcode == kFlush) return r;  // accepted no-op
  if (cmd.opcode != kRead && cmd.opcode != kWrite) {
    r.status = kInvalidOpcode;
    return r;
  }
  const std::uint64_t blocks = cmd.blocks();
  if (cmd.slba() >= cfg_.total_blocks ||
      blocks > cfg_.total_blocks - cmd.slba()) {
    r.status = kLbaOutOfRange;
    return r;
  }
  const std::uint64_t bytes = blocks * cfg_.block_size;

  std::vector<std::pair<std::uint64_t, std::uint32_t>> segs;
  r.status = gather_pages(cmd, bytes, segs, r.prp_list_entries, owner, req);
  if (r.status != kSuccess) return r;

  // Stream blocks through the HPA segment list.
  std::vector<std::uint8_t> blk(cfg_.block_size);
  std::size_t seg = 0;
  std::uint32_t seg_off = 0;
  for (std::uint64_t b = 0; b < blocks; ++b) {
    if (cmd.opcode == kRead)
      store_->read_block(cmd.slba() + b, blk);
    std::uint32_t done = 0;
    while (done < cfg_.block_size) {
      const std::uint32_t n =
          std::min(cfg_.block_size - done, segs[seg].second - seg_off);
      if (cmd.opcode == kRead)
        mem_.write(segs[seg].first + seg_off,
                   std::span<const std::uint8_t>(blk.data() + done, n));
      else
        mem_.read(segs[seg].first + seg_off,
                  std::span<std::uint8_t>(blk.data() + done, n));
      done += n;
      seg_off += n;
      if (seg_off == segs[seg].second) {
        ++seg;
        seg_off = 0;
      }
    }
    if (cmd.opcode == kWrite)
      store_->write_block(cmd.slba() + b, blk);
  }
  r.bytes_moved = bytes;
  return r;
}

}  // namespace iovsim::nvme
