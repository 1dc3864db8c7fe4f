#include "iovsim/mem/gpa_alloc.hpp"

#include <ostream>
#include <stdexcept>

#include "iovsim/mem/host_memory.hpp"

namespace iovsim::mem {

GpaRange GpaRangeAllocator::alloc(std::int32_t vm, std::uint64_t size) {
  if (grants_.count(vm))
    throw std::runtime_error("vm already holds a GPA grant");
  GpaRange r;
  r.size = pages_for(size) * kPageSize;
  if (r.size == 0) {
    r.base = 0;
    grants_[vm] = r;
    return r;
  }
  for (auto it = free_.begin(); it != free_.end(); ++it) {
    if (it->second >= r.size) {
      r.base = it->first;
      const std::uint64_t rem = it->second - r.size;
      const std::uint64_t rem_base = it->first + r.size;
      free_.erase(it);
      if (rem) free_[rem_base] = rem;
      grants_[vm] = r;
      return r;
    }
  }
  r.base = next_;
  next_ += r.size;
  grants_[vm] = r;
  return r;
}

void GpaRangeAllocator::free(std::int32_t vm) {
  auto it = grants_.find(vm);
  if (it == grants_.end()) return;
  if (it->second.size) {
    auto [pos, fresh] = free_.emplace(it->second.base, it->second.size);
    // Coalesce with neighbors so reuse stays first-fit over maximal holes.
    if (fresh) {
      auto next = std::next(pos);
      if (next != free_.end() && pos->first + pos->second == next->first) {
        pos->second += next->second;
        free_.erase(next);
      }
      if (pos != free_.begin()) {
        auto prev = std::prev(pos);
        if (prev->first + prev->second == pos->first) {
          prev->second += pos->second;
          free_.erase(pos);
        }
      }
    }
  }
  grants_.erase(it);
}

bool GpaRangeAllocator::pairwise_disjoint() const {
  for (auto a = grants_.begin(); a != grants_.end(); ++a) {
    for (auto b = std::next(a); b != grants_.end(); ++b) {
      if (a->second.size == 0 || b->second.size == 0) continue;
      if (a->second.base < b->second.end() && b->second.base < a->second.end())
        return false;
    }
  }
  return true;
}

void GpaRangeAllocator::dump(std::ostream& os) const {
  for (const auto& [vm, r] : grants_)
    os << "vm=" << vm << " gpa=[" << r.base << ',' << r.end() << ")\n";
}

}  // namespace iovsim::mem
