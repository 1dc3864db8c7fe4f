#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>

namespace iovsim::mem {

struct GpaRange {
  std::uint64_t base = 0;
  std::uint64_t size = 0;
  std::uint64_t end() const { return base + size; }
  bool contains(std::uint64_t gpa, std::uint64_t bytes = 1) const {
    return gpa >= base && bytes <= size && gpa - base <= size - bytes;
  }
};

// Hands out pairwise-disjoint guest-physical ranges, one per VM, growing
// upward from zero. Freed ranges are reusable (first fit). Disjoint grants
// are what make the shared per-device DMA table safe.
class GpaRangeAllocator {
 public:
  // size is rounded up to a page; size 0 yields an empty range.
  GpaRange alloc(std::int32_t vm, std::uint64_t size);
  void free(std::int32_t vm);

  const std::map<std::int32_t, GpaRange>& grants() const { return grants_; }
  bool pairwise_disjoint() const;

  void dump(std::ostream& os) const;

 private:
  std::map<std::int32_t, GpaRange> grants_;
  std::map<std::uint64_t, std::uint64_t> free_;  // base -> size
  std::uint64_t next_ = 0;
};

}  // namespace iovsim::mem
