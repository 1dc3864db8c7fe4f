#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>

namespace iovsim::mem {

// Per-VM second-level (GPA -> HPA) page table with lazy, fault-driven fill.
// The handler runs at most once per page: after it installs a mapping, later
// accesses hit directly. Remapping a mapped page to a different frame is an
// error; identical remaps are idempotent no-ops.
class SecondLevelTable {
 public:
  // Returns true when it installed a mapping for gpa_page.
  using FaultHandler = std::function<bool(std::uint64_t gpa_page)>;

  void set_fault_handler(FaultHandler h) { handler_ = std::move(h); }

  void map(std::uint64_t gpa_page, std::uint64_t hpa_page);
  void unmap(std::uint64_t gpa_page);

  // GPA -> HPA. Unmapped pages invoke the fault handler once, then retry.
  // Returns nullopt on an unhandled (hard) fault.
  std::optional<std::uint64_t> translate(std::uint64_t gpa);

  bool mapped(std::uint64_t gpa_page) const { return map_.count(gpa_page) != 0; }
  std::uint64_t fault_count() const { return faults_; }
  // Per-page fault tally, for the one-fault-per-page rule.
  const std::map<std::uint64_t, std::uint32_t>& page_faults() const {
    return page_faults_;
  }
  std::size_t mapped_pages() const { return map_.size(); }

  void dump(std::ostream& os) const;

 private:
  std::map<std::uint64_t, std::uint64_t> map_;  // gpa_page -> hpa_page
  std::map<std::uint64_t, std::uint32_t> page_faults_;
  std::uint64_t faults_ = 0;
  FaultHandler handler_;
};

}  // namespace iovsim::mem
