#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "iovsim/sim/time.hpp"

namespace iovsim::telemetry {

// One counter class per hypervisor-visible occurrence. `spurious` covers
// unattributable ones: doorbell writes to unknown queues, completions with
// unknown command ids, interrupts without a remap entry.
enum class EventKind : std::uint8_t {
  vm_exit,
  page_fault,
  data_copy,
  doorbell,
  intr_posted,
  intr_injected,
  poller_cycle,
  device_service,
  dma_fault,
  spurious,
};

constexpr int kEventKindCount = 10;

std::string_view to_string(EventKind k);

constexpr std::int32_t kHostVm = -1;

struct EventRecord {
  sim::Ps t;          // instant the event starts
  std::int32_t vm;    // kHostVm when not attributable to a guest
  EventKind kind;
  std::uint64_t bytes;  // payload: bytes moved, or core-ps for poller_cycle
  std::uint64_t req;    // request correlation tag, 0 = none
};

// Completed-request summary; the closed-loop drivers append one per request.
struct RequestRecord {
  std::int32_t vm;
  std::uint32_t job;
  std::uint64_t req;
  sim::Ps submit;
  sim::Ps complete;
  std::uint32_t bytes;
  std::uint8_t opcode;
};

// Append-only. Aggregations recount from here; nothing is pre-summarized.
class EventLedger {
 public:
  void append(sim::Ps t, std::int32_t vm, EventKind kind, std::uint64_t bytes,
              std::uint64_t req = 0) {
    events_.push_back(EventRecord{t, vm, kind, bytes, req});
  }
  void complete_request(const RequestRecord& r) { requests_.push_back(r); }

  const std::vector<EventRecord>& events() const { return events_; }
  const std::vector<RequestRecord>& requests() const { return requests_; }

  std::uint64_t count(EventKind k) const;
  std::uint64_t count(EventKind k, std::int32_t vm) const;
  std::uint64_t count_after(EventKind k, std::int32_t vm, sim::Ps t) const;

  // Events attributable to one request, in ledger order.
  std::vector<EventRecord> trace(std::uint64_t req) const;

  void dump(std::ostream& os) const;

 private:
  std::vector<EventRecord> events_;
  std::vector<RequestRecord> requests_;
};

}  // namespace iovsim::telemetry
