#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

namespace iovsim::mem {

constexpr std::uint64_t kPageSize = 4096;
constexpr std::uint64_t kPageShift = 12;

inline std::uint64_t page_of(std::uint64_t addr) { return addr >> kPageShift; }
inline std::uint64_t page_base(std::uint64_t addr) { return addr & ~(kPageSize - 1); }
inline std::uint64_t pages_for(std::uint64_t bytes) {
  return (bytes + kPageSize - 1) / kPageSize;
}

// Flat host-physical address space. Address ranges are reserved up front;
// backing pages materialize zero-filled on first touch, so reserving a large
// window costs nothing until somebody writes it. Device windows (doorbells)
// register write hooks that fire after the store lands.
class HostMemory {
 public:
  using WriteHook =
      std::function<void(std::uint64_t hpa, std::uint64_t value, std::uint32_t width)>;

  // Reserves `bytes` of address space, page-aligned; returns the base HPA.
  std::uint64_t alloc(std::uint64_t bytes);

  void write(std::uint64_t hpa, std::span<const std::uint8_t> data);
  void read(std::uint64_t hpa, std::span<std::uint8_t> out);

  void write_u32(std::uint64_t hpa, std::uint32_t v);
  void write_u64(std::uint64_t hpa, std::uint64_t v);
  std::uint32_t read_u32(std::uint64_t hpa);
  std::uint64_t read_u64(std::uint64_t hpa);

  void add_write_hook(std::uint64_t base, std::uint64_t bytes, WriteHook hook);

  bool page_materialized(std::uint64_t pg) const { return pages_.count(pg) != 0; }
  std::size_t materialized_pages() const { return pages_.size(); }
  std::uint64_t reserved_bytes() const { return next_; }

 private:
  std::uint8_t* page(std::uint64_t pg);
  void fire_hooks(std::uint64_t hpa, std::span<const std::uint8_t> data);

  struct HookRange {
    std::uint64_t base, bytes;
    WriteHook hook;
  };

  std::uint64_t next_ = kPageSize;  // page 0 kept unmapped to catch null HPAs
  std::unordered_map<std::uint64_t, std::unique_ptr<std::uint8_t[]>> pages_;
  std::vector<HookRange> hooks_;
};

}  // namespace iovsim::mem
