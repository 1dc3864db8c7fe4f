#include "iovsim/telemetry/cost_model.hpp"

namespace iovsim::telemetry {

sim::Ps CostModel::cost(EventKind kind, std::uint64_t bytes) const {
  switch (kind) {
    case EventKind::vm_exit: return exit_ps;
    case EventKind::page_fault: return fault_ps;
    case EventKind::data_copy: return copy_byte_ps * bytes;
    case EventKind::doorbell: return doorbell_ps;
    case EventKind::intr_posted: return posted_ps;
    case EventKind::intr_injected: return inject_ps;
    case EventKind::device_service: return service(bytes);
    case EventKind::poller_cycle:
    case EventKind::dma_fault:
    case EventKind::spurious: return 0;
  }
  return 0;
}

}  // namespace iovsim::telemetry
