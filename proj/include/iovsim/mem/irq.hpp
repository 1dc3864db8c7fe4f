#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <vector>

#include "iovsim/sim/event_loop.hpp"
#include "iovsim/telemetry/cost_model.hpp"
#include "iovsim/telemetry/ledger.hpp"

namespace iovsim::mem {

// Routes device interrupt vectors to guests. Posted entries deliver without
// any exit-class event; non-posted entries are injected and cost one. Raising
// an unregistered vector only logs a spurious event.
class InterruptRemapTable {
 public:
  struct Route {
    std::int32_t vm;
    std::uint16_t vvec;
    bool posted;
  };
  struct Delivery {
    sim::Ps t;
    std::int32_t vm;
    std::uint16_t vvec;
    bool posted;
  };
  using GuestHandler = std::function<void()>;

  InterruptRemapTable(sim::EventLoop& loop, telemetry::EventLedger& ledger,
                      const telemetry::CostModel& costs)
      : loop_(loop), ledger_(ledger), costs_(costs) {}

  void map(std::uint16_t pvec, Route route);
  void unmap_vm(std::int32_t vm);
  bool routed(std::uint16_t pvec) const { return routes_.count(pvec) != 0; }

  // The guest's ISR for (vm, vvec); invoked after the delivery charge.
  void set_guest_handler(std::int32_t vm, std::uint16_t vvec, GuestHandler h);

  // Returns true if the vector had a route. `req` tags the ledger event.
  bool raise(std::uint16_t pvec, std::uint64_t req = 0);

  const std::vector<Delivery>& delivery_log() const { return log_; }
  void dump(std::ostream& os) const;

 private:
  sim::EventLoop& loop_;
  telemetry::EventLedger& ledger_;
  const telemetry::CostModel& costs_;
  std::map<std::uint16_t, Route> routes_;
  std::map<std::pair<std::int32_t, std::uint16_t>, GuestHandler> handlers_;
  std::vector<Delivery> log_;
};

}  // namespace iovsim::mem
