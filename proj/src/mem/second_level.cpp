#include "iovsim/mem/second_level.hpp"

#include <ostream>
#include <stdexcept>

#include "iovsim/mem/host_memory.hpp"

namespace iovsim::mem {

void SecondLevelTable::map(std::uint64_t gpa_page, std::uint64_t hpa_page) {
  auto [it, fresh] = map_.emplace(gpa_page, hpa_page);
  if (!fresh && it->second != hpa_page)
    throw std::runtime_error("second-level remap to a different frame");
}

void SecondLevelTable::unmap(std::uint64_t gpa_page) { map_.erase(gpa_page); }

std::optional<std::uint64_t> SecondLevelTable::translate(std::uint64_t gpa) {
  const std::uint64_t pg = page_of(gpa);
  auto it = map_.find(pg);
  if (it == map_.end()) {
    if (!handler_) return std::nullopt;
    ++faults_;
    ++page_faults_[pg];
    if (!handler_(pg)) return std::nullopt;
    it = map_.find(pg);
    if (it == map_.end()) return std::nullopt;
  }
  return (it->second << kPageShift) | (gpa & (kPageSize - 1));
}

void SecondLevelTable::dump(std::ostream& os) const {
  for (const auto& [g, h] : map_)
    os << "gpa_page=" << g << " -> hpa_page=" << h << '\n';
}

}  // namespace iovsim::mem
