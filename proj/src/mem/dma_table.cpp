#include "iovsim/mem/dma_table.hpp"

#include <ostream>
#include <stdexcept>

#include "iovsim/mem/host_memory.hpp"

namespace iovsim::mem {

void DmaTable::map(std::uint64_t dma_page, std::uint64_t hpa_page,
                   std::int32_t owner) {
  auto [it, fresh] = map_.emplace(dma_page, Entry{hpa_page, owner});
  if (!fresh && (it->second.hpa_page != hpa_page || it->second.owner != owner))
    throw std::runtime_error("dma remap to a different frame or owner");
}

void DmaTable::unmap_owner(std::int32_t owner) {
  for (auto it = map_.begin(); it != map_.end();) {
    if (it->second.owner == owner)
      it = map_.erase(it);
    else
      ++it;
  }
}

std::optional<std::uint64_t> DmaTable::translate(std::uint64_t dma_addr) const {
  if (dma_addr >= kHostIovaBase) return dma_addr - kHostIovaBase;
  auto it = map_.find(page_of(dma_addr));
  if (it == map_.end()) return std::nullopt;
  return (it->second.hpa_page << kPageShift) | (dma_addr & (kPageSize - 1));
}

void DmaTable::dump(std::ostream& os) const {
  for (const auto& [pg, e] : map_)
    os << "dma_page=" << pg << " -> hpa_page=" << e.hpa_page
       << " owner=" << e.owner << '\n';
}

}  // namespace iovsim::mem
