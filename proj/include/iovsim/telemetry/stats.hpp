#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "iovsim/telemetry/cost_model.hpp"
#include "iovsim/telemetry/ledger.hpp"

namespace iovsim::telemetry {

struct Window {
  sim::Ps t0 = 0;
  sim::Ps t1 = ~sim::Ps{0};
};

struct VmStats {
  std::int32_t vm = 0;  // kHostVm on the totals row
  std::uint64_t ops = 0;
  double iops = 0;
  double mean_ns = 0;
  double median_ns = 0;
  double p99_ns = 0;
  double p999_ns = 0;
  std::uint64_t exits = 0;
  std::uint64_t faults = 0;
  std::uint64_t copies = 0;
  std::uint64_t bytes = 0;
};

// Nearest-rank percentile: smallest sample with cumulative frequency >= p%.
// `p` in (0, 100]. The input need not be sorted.
double percentile_nearest_rank(std::vector<double> samples, double p);

// (sum x)^2 / (n * sum x^2); 1.0 for equal shares, 1/n for one-hot.
double jain_fairness(std::span<const double> xs);

// End-to-end charge of one request trace: event costs plus queueing gaps
// embedded in the timestamps (an event that starts after the previous one
// finished contributes its wait). Throws std::invalid_argument when the
// trace lacks a completion delivery (intr_posted / intr_injected).
double latency_of(std::span<const EventRecord> trace, const CostModel& cm);

// Per-VM rows (ascending vm) followed by a totals row (vm = kHostVm).
// Requests are windowed by completion time; event counters recount the raw
// ledger over the same window.
std::vector<VmStats> aggregate(const EventLedger& ledger, Window w);

}  // namespace iovsim::telemetry
