#include "iovsim/mem/irq.hpp"

#include <ostream>
#include <stdexcept>

namespace iovsim::mem {

void InterruptRemapTable::map(std::uint16_t pvec, Route route) {
  auto [it, fresh] = routes_.emplace(pvec, route);
  if (!fresh) throw std::runtime_error("interrupt vector already routed");
}

void InterruptRemapTable::unmap_vm(std::int32_t vm) {
  for (auto it = routes_.begin(); it != routes_.end();) {
    if (it->second.vm == vm)
      it = routes_.erase(it);
    else
      ++it;
  }
  for (auto it = handlers_.begin(); it != handlers_.end();) {
    if (it->first.first == vm)
      it = handlers_.erase(it);
    else
      ++it;
  }
}

void InterruptRemapTable::set_guest_handler(std::int32_t vm, std::uint16_t vvec,
                                            GuestHandler h) {
  handlers_[{vm, vvec}] = std::move(h);
}

bool InterruptRemapTable::raise(std::uint16_t pvec, std::uint64_t req) {
  auto it = routes_.find(pvec);
  if (it == routes_.end()) {
    ledger_.append(loop_.now(), telemetry::kHostVm,
                   telemetry::EventKind::spurious, pvec, req);
    return false;
  }
  const Route r = it->second;
  const auto kind = r.posted ? telemetry::EventKind::intr_posted
                             : telemetry::EventKind::intr_injected;
  ledger_.append(loop_.now(), r.vm, kind, 0, req);
  log_.push_back(Delivery{loop_.now(), r.vm, r.vvec, r.posted});
  auto h = handlers_.find({r.vm, r.vvec});
  if (h != handlers_.end()) {
    const auto fn = h->second;
    loop_.after(costs_.cost(kind, 0), fn);
  }
  return true;
}

void InterruptRemapTable::dump(std::ostream& os) const {
  for (const auto& [pvec, r] : routes_)
    os << "pvec=" << pvec << " -> vm=" << r.vm << " vvec=" << r.vvec
       << (r.posted ? " posted" : " injected") << '\n';
}

}  // namespace iovsim::mem
