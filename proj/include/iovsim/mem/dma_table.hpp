#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>

namespace iovsim::mem {

// DMA addresses at or above this base are host-owned (the host's own driver
// mappings: bounce buffers, pinned guest pages) and translate identity minus
// the base. Guest grants live far below, so the two can never collide.
constexpr std::uint64_t kHostIovaBase = 1ULL << 44;

inline std::uint64_t host_iova(std::uint64_t hpa) { return kHostIovaBase + hpa; }

// Per-device DMA remap table, shared by every VM using the device. Guests
// place their own GPAs in PRPs; safety comes from the grants being disjoint,
// not from per-VM tables. Entries remember their owner so isolation checks
// can recount them.
class DmaTable {
 public:
  struct Entry {
    std::uint64_t hpa_page;
    std::int32_t owner;  // kHostVm for host-owned entries
  };

  void map(std::uint64_t dma_page, std::uint64_t hpa_page, std::int32_t owner);
  void unmap_owner(std::int32_t owner);

  // DMA address -> HPA; nullopt = remap miss (caller reports a dma fault).
  std::optional<std::uint64_t> translate(std::uint64_t dma_addr) const;

  const std::map<std::uint64_t, Entry>& entries() const { return map_; }
  void dump(std::ostream& os) const;

 private:
  std::map<std::uint64_t, Entry> map_;  // dma_page -> entry
};

}  // namespace iovsim::mem
