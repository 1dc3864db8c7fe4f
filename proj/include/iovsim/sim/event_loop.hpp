#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "iovsim/sim/time.hpp"

namespace iovsim::sim {

// Single-threaded discrete-event loop. Ties on the timestamp run in
// scheduling order (monotone sequence number), so a run is a pure function
// of its inputs.
class EventLoop {
 public:
  using Fn = std::function<void()>;

  Ps now() const { return now_; }

  void at(Ps t, Fn fn);
  void after(Ps dt, Fn fn) { at(now_ + dt, std::move(fn)); }

  // Runs events until the queue is empty.
  void run();

  // Runs until `pred` holds (checked after each event) or the queue drains.
  void run_until(const std::function<bool()>& pred);

  bool empty() const { return q_.empty(); }
  std::uint64_t executed() const { return executed_; }

 private:
  struct Ev {
    Ps t;
    std::uint64_t seq;
    Fn fn;
  };
  struct Later {
    bool operator()(const Ev& a, const Ev& b) const {
      if (a.t != b.t) return a.t > b.t;
      return a.seq > b.seq;
    }
  };

  Ps now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
  std::priority_queue<Ev, std::vector<Ev>, Later> q_;
};

}  // namespace iovsim::sim
