#pragma once

#include <iosfwd>

#include "iovsim/harness/runner.hpp"
#include "json.hpp"

namespace iovsim::harness {

// Everything below is derived from the scenario and the simulation clock;
// no wall time, hostnames, or paths, so equal seeds dump byte-identical.
nlohmann::ordered_json scenario_to_json(const Scenario& sc);
nlohmann::ordered_json report_json(const Scenario& sc, const RunResult& r);
nlohmann::ordered_json comparison_json(const Scenario& sc,
                                       const ComparisonResult& cr);

// Config files mirror scenario_to_json. Cost values are nanoseconds (the
// in-memory table is picoseconds). Unknown keys are errors, not typos to
// silently drop. Missing keys keep their defaults.
Scenario scenario_from_json(const nlohmann::json& j);

// Per-VM rows only (the totals row is JSON-side). Fixed header:
// vm,iops,mean_ns,p99_ns,exits,faults,copies
void write_csv(std::ostream& os, const std::vector<telemetry::VmStats>& rows);

// Raw event dump, one line per record: t_ps,vm,kind,bytes,req
void write_trace(std::ostream& os, const telemetry::EventLedger& ledger);

}  // namespace iovsim::harness
