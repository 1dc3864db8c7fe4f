#include <cstring>
#include <vector>

#include "doctest.h"
#include "iovsim/mem/dma_table.hpp"
#include "iovsim/mem/gpa_alloc.hpp"
#include "iovsim/mem/host_memory.hpp"
#include "iovsim/mem/irq.hpp"
#include "iovsim/mem/second_level.hpp"
#include "iovsim/sim/event_loop.hpp"
#include "iovsim/telemetry/ledger.hpp"

using namespace iovsim;
using namespace iovsim::mem;

TEST_CASE("host memory materializes pages on write, reads zero-fill") {
  HostMemory m;
  const std::uint64_t a = m.alloc(3 * kPageSize);
  CHECK(a >= kPageSize);  // page 0 stays unmapped
  CHECK(a % kPageSize == 0);
  CHECK(m.materialized_pages() == 0);

  std::uint8_t buf[8] = {};
  m.read(a + kPageSize, buf);  // untouched page reads as zeros
  for (auto b : buf) CHECK(b == 0);
  CHECK(m.materialized_pages() == 0);

  m.write_u64(a + kPageSize - 4, 0x1122334455667788ULL);  // straddles pages
  CHECK(m.materialized_pages() == 2);
  CHECK(m.read_u64(a + kPageSize - 4) == 0x1122334455667788ULL);
  CHECK(m.read_u32(a + kPageSize - 4) == 0x55667788u);
}

TEST_CASE("allocations never overlap") {
  HostMemory m;
  const std::uint64_t a = m.alloc(100);      // rounds to one page
  const std::uint64_t b = m.alloc(kPageSize);
  CHECK(b >= a + kPageSize);
}

TEST_CASE("write hooks observe stores into their window") {
  HostMemory m;
  const std::uint64_t db = m.alloc(kPageSize);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> seen;
  m.add_write_hook(db, kPageSize,
                   [&](std::uint64_t hpa, std::uint64_t v, std::uint32_t w) {
                     seen.emplace_back(hpa - db, v);
                     CHECK(w == 4);
                   });
  m.write_u32(db + 8, 17);
  m.write_u32(db + 4096 - 4, 3);
  m.write_u32(db - 0, 0);  // in-window
  std::uint8_t raw[4] = {1, 0, 0, 0};
  m.write(db - 4 + 4, raw);  // plain write also fires (width 4)
  REQUIRE(seen.size() == 4);
  CHECK(seen[0] == std::pair<std::uint64_t, std::uint64_t>{8, 17});
  CHECK(seen[1].first == 4092);
}

TEST_CASE("gpa grants are pairwise disjoint and reusable first-fit") {
  GpaRangeAllocator g;
  const GpaRange a = g.alloc(0, 10 * kPageSize);
  const GpaRange b = g.alloc(1, 4 * kPageSize);
  const GpaRange c = g.alloc(2, kPageSize);
  CHECK(g.pairwise_disjoint());
  CHECK(a.size == 10 * kPageSize);
  CHECK(b.base >= a.end());
  CHECK(c.base >= b.end());
  CHECK(a.contains(a.base + a.size - 1));
  CHECK_FALSE(a.contains(a.end()));
  CHECK(a.contains(a.base, a.size));
  CHECK_FALSE(a.contains(a.base + 1, a.size));

  g.free(1);
  const GpaRange d = g.alloc(3, 2 * kPageSize);  // fits the hole b left
  CHECK(d.base == b.base);
  CHECK(g.pairwise_disjoint());
  const GpaRange e = g.alloc(4, 4 * kPageSize);  // remainder is too small
  CHECK(g.pairwise_disjoint());
  CHECK(e.base >= c.end());
}

TEST_CASE("dma table translates by page and evicts by owner") {
  DmaTable t;
  t.map(100, 555, 0);
  t.map(101, 556, 0);
  t.map(200, 777, 1);
  CHECK(t.translate(100 * kPageSize + 12) == 555 * kPageSize + 12);
  CHECK(t.translate(201 * kPageSize) == std::nullopt);
  CHECK(t.translate(host_iova(0x1234)) == 0x1234);  // host identity window

  t.unmap_owner(0);
  CHECK(t.translate(100 * kPageSize) == std::nullopt);
  CHECK(t.translate(200 * kPageSize + 5) == 777 * kPageSize + 5);
  CHECK(t.entries().size() == 1);
}

TEST_CASE("second-level table faults once per page") {
  SecondLevelTable slt;
  int calls = 0;
  slt.set_fault_handler([&](std::uint64_t gpa_page) {
    ++calls;
    if (gpa_page >= 1000) return false;  // outside any window
    slt.map(gpa_page, gpa_page + 50);
    return true;
  });

  CHECK(slt.translate(7 * kPageSize + 3) == 57 * kPageSize + 3);
  CHECK(slt.translate(7 * kPageSize + 9) == 57 * kPageSize + 9);
  CHECK(calls == 1);  // second access hits the installed mapping
  CHECK(slt.fault_count() == 1);
  CHECK(slt.page_faults().at(7) == 1);

  CHECK(slt.translate(1000 * kPageSize) == std::nullopt);  // hard fault
  CHECK(calls == 2);

  slt.map(7, 57);  // identical remap: no-op
  CHECK_THROWS(slt.map(7, 58));  // conflicting remap is a bug
  slt.unmap(7);
  CHECK_FALSE(slt.mapped(7));
  CHECK(slt.translate(7 * kPageSize) == 57 * kPageSize);  // faults again
  CHECK(slt.page_faults().at(7) == 2);
}

TEST_CASE("posted interrupts deliver without exit-class events") {
  sim::EventLoop loop;
  telemetry::EventLedger led;
  telemetry::CostModel costs;
  InterruptRemapTable irt(loop, led, costs);

  int posted_hits = 0, injected_hits = 0;
  irt.map(5, {.vm = 1, .vvec = 9, .posted = true});
  irt.map(6, {.vm = 2, .vvec = 1, .posted = false});
  irt.set_guest_handler(1, 9, [&] { posted_hits++; });
  irt.set_guest_handler(2, 1, [&] { injected_hits++; });

  CHECK(irt.raise(5));
  CHECK(irt.raise(6));
  CHECK_FALSE(irt.raise(77));  // unrouted: spurious only
  loop.run();

  CHECK(posted_hits == 1);
  CHECK(injected_hits == 1);
  CHECK(led.count(telemetry::EventKind::intr_posted) == 1);
  CHECK(led.count(telemetry::EventKind::intr_injected) == 1);
  CHECK(led.count(telemetry::EventKind::spurious) == 1);
  CHECK(led.count(telemetry::EventKind::vm_exit) == 0);
  REQUIRE(irt.delivery_log().size() == 2);
  CHECK(irt.delivery_log()[0].posted);
  CHECK_FALSE(irt.delivery_log()[1].posted);

  // Posted delivery costs posted_ps (0 by default); injection costs
  // inject_ps of simulated time before the handler runs.
  CHECK(irt.delivery_log()[1].t == 0);

  irt.unmap_vm(1);
  CHECK_FALSE(irt.raise(5));
  CHECK(irt.routed(6));
}
