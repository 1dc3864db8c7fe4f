#include "iovsim/sim/event_loop.hpp"

#include <cassert>
#include <utility>

namespace iovsim::sim {

void EventLoop::at(Ps t, Fn fn) {
  assert(t >= now_);
  q_.push(Ev{t, next_seq_++, std::move(fn)});
}

void EventLoop::run() {
  while (!q_.empty()) {
    // The queued Ev is const through top(); move the callback out via a copy
    // of the handle before popping.
    Ev ev = std::move(const_cast<Ev&>(q_.top()));
    q_.pop();
    now_ = ev.t;
    ++executed_;
    ev.fn();
  }
}

void EventLoop::run_until(const std::function<bool()>& pred) {
  while (!q_.empty() && !pred()) {
    Ev ev = std::move(const_cast<Ev&>(q_.top()));
    q_.pop();
    now_ = ev.t;
    ++executed_;
    ev.fn();
  }
}

}  // namespace iovsim::sim
