#include "iovsim/telemetry/ledger.hpp"

#include <ostream>

namespace iovsim::telemetry {

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::vm_exit: return "vm_exit";
    case EventKind::page_fault: return "page_fault";
    case EventKind::data_copy: return "data_copy";
    case EventKind::doorbell: return "doorbell";
    case EventKind::intr_posted: return "intr_posted";
    case EventKind::intr_injected: return "intr_injected";
    case EventKind::poller_cycle: return "poller_cycle";
    case EventKind::device_service: return "device_service";
    case EventKind::dma_fault: return "dma_fault";
    case EventKind::spurious: return "spurious";
  }
  return "unknown";
}

std::uint64_t EventLedger::count(EventKind k) const {
  std::uint64_t n = 0;
  for (const auto& e : events_) n += (e.kind == k);
  return n;
}

std::uint64_t EventLedger::count(EventKind k, std::int32_t vm) const {
  std::uint64_t n = 0;
  for (const auto& e : events_) n += (e.kind == k && e.vm == vm);
  return n;
}

std::uint64_t EventLedger::count_after(EventKind k, std::int32_t vm,
                                       sim::Ps t) const {
  std::uint64_t n = 0;
  for (const auto& e : events_) n += (e.kind == k && e.vm == vm && e.t > t);
  return n;
}

std::vector<EventRecord> EventLedger::trace(std::uint64_t req) const {
  std::vector<EventRecord> out;
  for (const auto& e : events_)
    if (e.req == req) out.push_back(e);
  return out;
}

void EventLedger::dump(std::ostream& os) const {
  for (const auto& e : events_) {
    os << e.t << " vm=" << e.vm << ' ' << to_string(e.kind)
       << " bytes=" << e.bytes << " req=" << e.req << '\n';
  }
}

}  // namespace iovsim::telemetry
