#include <array>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "iovsim/telemetry/stats.hpp"

using namespace iovsim;
using namespace iovsim::telemetry;

TEST_CASE("nearest-rank percentile, frozen by hand") {
  std::vector<double> s{30, 10, 40, 20};  // unsorted on purpose
  CHECK(percentile_nearest_rank(s, 25) == doctest::Approx(10));
  CHECK(percentile_nearest_rank(s, 50) == doctest::Approx(20));
  CHECK(percentile_nearest_rank(s, 75) == doctest::Approx(30));
  CHECK(percentile_nearest_rank(s, 99) == doctest::Approx(40));
  CHECK(percentile_nearest_rank(s, 100) == doctest::Approx(40));
  // 50% of five samples -> rank ceil(2.5) = 3.
  CHECK(percentile_nearest_rank({1, 2, 3, 4, 5}, 50) == doctest::Approx(3));
  CHECK(percentile_nearest_rank({7}, 1) == doctest::Approx(7));
  CHECK(percentile_nearest_rank({7}, 100) == doctest::Approx(7));
}

TEST_CASE("jain fairness: equal shares 1, one-hot 1/n") {
  const std::array<double, 4> equal{5, 5, 5, 5};
  CHECK(jain_fairness(equal) == doctest::Approx(1.0));
  const std::array<double, 2> onehot2{1, 0};
  CHECK(jain_fairness(onehot2) == doctest::Approx(0.5));
  const std::array<double, 4> onehot4{0, 0, 9, 0};
  CHECK(jain_fairness(onehot4) == doctest::Approx(0.25));
  // (1+2+3)^2 / (3 * (1+4+9)) = 36/42.
  const std::array<double, 3> mixed{1, 2, 3};
  CHECK(jain_fairness(mixed) == doctest::Approx(36.0 / 42.0));
}

TEST_CASE("per-kind event charges come straight off the table") {
  CostModel cm;  // defaults
  CHECK(cm.cost(EventKind::vm_exit, 0) == cm.exit_ps);
  CHECK(cm.cost(EventKind::page_fault, 0) == cm.fault_ps);
  CHECK(cm.cost(EventKind::data_copy, 4096) == 4096 * cm.copy_byte_ps);
  CHECK(cm.cost(EventKind::doorbell, 0) == cm.doorbell_ps);
  CHECK(cm.cost(EventKind::intr_posted, 0) == cm.posted_ps);
  CHECK(cm.cost(EventKind::intr_injected, 0) == cm.inject_ps);
  CHECK(cm.cost(EventKind::device_service, 4096) ==
        cm.service_a_ps + 4096 * cm.service_b_byte_ps);
  // Accounting records, not work: never charged to a request.
  CHECK(cm.cost(EventKind::poller_cycle, 123456) == 0);
  CHECK(cm.cost(EventKind::dma_fault, 64) == 0);
  CHECK(cm.cost(EventKind::spurious, 0) == 0);
  CHECK(cm.service(4096) == 5'000'000 + 40'960);
  CHECK(cm.valid());
  cm.posted_ps = cm.inject_ps + 1;  // a posted path dearer than injection
  CHECK_FALSE(cm.valid());
}

TEST_CASE("latency_of a paravirtual-shaped trace, frozen by hand") {
  // exit 5000 + copy 819.2 + service 10000 + copy 819.2 + inject 5000
  // = 21638.4 ns for a 4 KiB request when copies cost 0.2 ns/byte.
  CostModel cm;
  cm.exit_ps = 5'000'000;
  cm.copy_byte_ps = 200;
  cm.inject_ps = 5'000'000;
  cm.service_a_ps = 10'000'000;
  cm.service_b_byte_ps = 0;

  std::vector<EventRecord> trace{
      {0, 0, EventKind::vm_exit, 4, 1},
      {5'000'000, 0, EventKind::data_copy, 4096, 1},
      {5'819'200, 0, EventKind::device_service, 4096, 1},
      {15'819'200, 0, EventKind::data_copy, 4096, 1},
      {16'638'400, 0, EventKind::intr_injected, 0, 1},
  };
  CHECK(latency_of(trace, cm) == doctest::Approx(21638.4));

  // A gap between events is queueing time and counts.
  std::vector<EventRecord> gap{
      {0, 0, EventKind::device_service, 4096, 2},
      {20'000'000, 0, EventKind::intr_injected, 0, 2},
  };
  CHECK(latency_of(gap, cm) == doctest::Approx(25000.0));

  // Posted delivery is free: the trace degenerates to the service time.
  std::vector<EventRecord> posted{
      {0, 0, EventKind::device_service, 4096, 3},
      {10'000'000, 0, EventKind::intr_posted, 0, 3},
  };
  CHECK(latency_of(posted, cm) == doctest::Approx(10000.0));

  std::vector<EventRecord> undelivered{
      {0, 0, EventKind::device_service, 4096, 4},
  };
  CHECK_THROWS_AS((void)latency_of(undelivered, cm), std::invalid_argument);
}

TEST_CASE("aggregate: per-vm rows ascending, totals last, recounted") {
  EventLedger led;
  // vm 0: two requests; vm 1: one. All durations chosen for exact ns.
  led.complete_request({0, 0, 1, 0, 1'000'000'000, 4096, 1});
  led.complete_request({0, 0, 2, 1'000'000'000, 2'000'000'000, 4096, 1});
  led.complete_request({1, 0, 3, 0, 2'000'000'000, 8192, 2});
  led.append(0, 0, EventKind::vm_exit, 4, 1);
  led.append(500'000'000, 1, EventKind::page_fault, 0x1000, 0);
  led.append(900'000'000, 0, EventKind::data_copy, 4096, 1);
  led.append(1'000'000'000, 0, EventKind::intr_injected, 0, 1);
  led.append(1'500'000'000, kHostVm, EventKind::poller_cycle, 42, 0);

  const auto rows = aggregate(led, Window{});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].vm == 0);
  CHECK(rows[1].vm == 1);
  CHECK(rows[2].vm == kHostVm);

  CHECK(rows[0].ops == 2);
  CHECK(rows[0].mean_ns == doctest::Approx(1e6));
  CHECK(rows[0].median_ns == doctest::Approx(1e6));
  CHECK(rows[0].exits == 2);  // one trap + one injection
  CHECK(rows[0].copies == 1);
  CHECK(rows[0].faults == 0);
  CHECK(rows[0].bytes == 8192);
  // Horizon is the last completion: 2 ms, so 2 ops -> 1000 IOPS.
  CHECK(rows[0].iops == doctest::Approx(1000.0));

  CHECK(rows[1].ops == 1);
  CHECK(rows[1].faults == 1);
  CHECK(rows[1].exits == 0);
  CHECK(rows[1].iops == doctest::Approx(500.0));

  CHECK(rows[2].ops == 3);
  CHECK(rows[2].exits == 2);
  CHECK(rows[2].faults == 1);
  CHECK(rows[2].copies == 1);
  CHECK(rows[2].bytes == 16384);
  CHECK(rows[2].iops == doctest::Approx(1500.0));
  CHECK(rows[2].mean_ns == doctest::Approx((1e6 + 1e6 + 2e6) / 3));

  // Same totals the raw counters give: nothing is pre-summarized.
  CHECK(led.count(EventKind::vm_exit) == 1);
  CHECK(led.count(EventKind::vm_exit, 0) == 1);
  CHECK(led.count(EventKind::vm_exit, 1) == 0);
  CHECK(led.count_after(EventKind::data_copy, 0, 899'999'999) == 1);
  CHECK(led.count_after(EventKind::data_copy, 0, 900'000'000) == 0);
  CHECK(led.trace(1).size() == 3);
}

TEST_CASE("aggregate windows by completion time") {
  EventLedger led;
  led.complete_request({0, 0, 1, 0, 1'000'000'000, 4096, 1});
  led.complete_request({0, 0, 2, 0, 3'000'000'000, 4096, 1});
  led.append(500'000'000, 0, EventKind::vm_exit, 4, 1);
  led.append(2'500'000'000, 0, EventKind::vm_exit, 4, 2);

  const auto in = aggregate(led, Window{0, 1'000'000'000});
  REQUIRE(in.size() == 2);  // vm 0 + totals
  CHECK(in[0].ops == 1);
  CHECK(in[0].exits == 1);  // the later exit is outside the window
  CHECK(in[0].iops == doctest::Approx(1000.0));

  const auto tail = aggregate(led, Window{2'000'000'000, ~sim::Ps{0}});
  CHECK(tail[0].ops == 1);
  CHECK(tail[0].exits == 1);
  CHECK(tail[0].mean_ns == doctest::Approx(3e6));
}
