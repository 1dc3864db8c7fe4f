#include "iovsim/telemetry/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace iovsim::telemetry {

double percentile_nearest_rank(std::vector<double> samples, double p) {
  if (samples.empty()) return 0;
  if (p <= 0 || p > 100) throw std::invalid_argument("percentile out of range");
  std::sort(samples.begin(), samples.end());
  const auto n = samples.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  if (rank == 0) rank = 1;
  return samples[rank - 1];
}

double jain_fairness(std::span<const double> xs) {
  if (xs.empty()) return 0;
  double s = 0, s2 = 0;
  for (double x : xs) {
    s += x;
    s2 += x * x;
  }
  if (s2 == 0) return 0;
  return (s * s) / (static_cast<double>(xs.size()) * s2);
}

double latency_of(std::span<const EventRecord> trace, const CostModel& cm) {
  bool completed = false;
  for (const auto& e : trace)
    completed |= (e.kind == EventKind::intr_posted ||
                  e.kind == EventKind::intr_injected);
  if (!completed)
    throw std::invalid_argument("request trace has no completion delivery");

  // Walk in timestamp order; each event occupies [start, start + cost).
  // A later start than the running cursor is queueing time and counts too.
  std::vector<EventRecord> evs(trace.begin(), trace.end());
  std::stable_sort(evs.begin(), evs.end(),
                   [](const EventRecord& a, const EventRecord& b) { return a.t < b.t; });
  const sim::Ps origin = evs.front().t;
  sim::Ps cursor = origin;
  for (const auto& e : evs) {
    if (e.t > cursor) cursor = e.t;
    cursor += cm.cost(e.kind, e.bytes);
  }
  return sim::ps_to_ns(cursor - origin);
}

std::vector<VmStats> aggregate(const EventLedger& ledger, Window w) {
  std::map<std::int32_t, VmStats> rows;
  std::map<std::int32_t, std::vector<double>> lat;

  for (const auto& r : ledger.requests()) {
    if (r.complete < w.t0 || r.complete > w.t1) continue;
    auto& row = rows[r.vm];
    row.vm = r.vm;
    row.ops++;
    row.bytes += r.bytes;
    lat[r.vm].push_back(sim::ps_to_ns(r.complete - r.submit));
  }
  for (const auto& e : ledger.events()) {
    if (e.t < w.t0 || e.t > w.t1 || e.vm == kHostVm) continue;
    auto& row = rows[e.vm];
    row.vm = e.vm;
    switch (e.kind) {
      // Exit-class: a trapped access and an injected interrupt both force a
      // world switch; posted deliveries do not.
      case EventKind::vm_exit: row.exits++; break;
      case EventKind::intr_injected: row.exits++; break;
      case EventKind::page_fault: row.faults++; break;
      case EventKind::data_copy: row.copies++; break;
      default: break;
    }
  }

  sim::Ps horizon = 0;
  for (const auto& r : ledger.requests()) horizon = std::max(horizon, r.complete);
  const sim::Ps t1 = std::min(w.t1, horizon);
  const double span_s = t1 > w.t0 ? static_cast<double>(t1 - w.t0) * 1e-12 : 0;

  std::vector<VmStats> out;
  VmStats total;
  total.vm = kHostVm;
  std::vector<double> all_lat;
  for (auto& [vm, row] : rows) {
    auto& ls = lat[vm];
    if (!ls.empty()) {
      double s = 0;
      for (double v : ls) s += v;
      row.mean_ns = s / static_cast<double>(ls.size());
      row.median_ns = percentile_nearest_rank(ls, 50);
      row.p99_ns = percentile_nearest_rank(ls, 99);
      row.p999_ns = percentile_nearest_rank(ls, 99.9);
    }
    if (span_s > 0) row.iops = static_cast<double>(row.ops) / span_s;
    total.ops += row.ops;
    total.exits += row.exits;
    total.faults += row.faults;
    total.copies += row.copies;
    total.bytes += row.bytes;
    all_lat.insert(all_lat.end(), ls.begin(), ls.end());
    out.push_back(row);
  }
  if (!all_lat.empty()) {
    double s = 0;
    for (double v : all_lat) s += v;
    total.mean_ns = s / static_cast<double>(all_lat.size());
    total.median_ns = percentile_nearest_rank(all_lat, 50);
    total.p99_ns = percentile_nearest_rank(all_lat, 99);
    total.p999_ns = percentile_nearest_rank(all_lat, 99.9);
  }
  if (span_s > 0) total.iops = static_cast<double>(total.ops) / span_s;
  out.push_back(total);
  return out;
}

}  // namespace iovsim::telemetry
