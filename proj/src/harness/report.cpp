#include "iovsim/harness/report.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace iovsim::harness {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct CostField {
  const char* key;  // config key, value in nanoseconds
  sim::Ps telemetry::CostModel::* member;
};

constexpr CostField kCostFields[] = {
    {"exit_ns", &telemetry::CostModel::exit_ps},
    {"fault_ns", &telemetry::CostModel::fault_ps},
    {"copy_byte_ns", &telemetry::CostModel::copy_byte_ps},
    {"doorbell_ns", &telemetry::CostModel::doorbell_ps},
    {"posted_ns", &telemetry::CostModel::posted_ps},
    {"inject_ns", &telemetry::CostModel::inject_ps},
    {"tick_ns", &telemetry::CostModel::tick_ps},
    {"scan_queue_ns", &telemetry::CostModel::scan_queue_ps},
    {"poll_convert_ns", &telemetry::CostModel::poll_convert_ps},
    {"poll_complete_ns", &telemetry::CostModel::poll_complete_ps},
    {"service_a_ns", &telemetry::CostModel::service_a_ps},
    {"service_b_byte_ns", &telemetry::CostModel::service_b_byte_ps},
};

ordered_json stats_row(const telemetry::VmStats& s) {
  ordered_json row;
  row["vm"] = s.vm;
  row["ops"] = s.ops;
  row["iops"] = s.iops;
  row["mean_ns"] = s.mean_ns;
  row["median_ns"] = s.median_ns;
  row["p99_ns"] = s.p99_ns;
  row["p999_ns"] = s.p999_ns;
  row["exits"] = s.exits;
  row["faults"] = s.faults;
  row["copies"] = s.copies;
  row["bytes"] = s.bytes;
  return row;
}

ordered_json result_body(const RunResult& r) {
  ordered_json body;
  ordered_json vms = ordered_json::array();
  ordered_json totals;
  for (const auto& s : r.stats) {
    if (s.vm == telemetry::kHostVm)
      totals = stats_row(s);
    else
      vms.push_back(stats_row(s));
  }
  body["totals"] = std::move(totals);
  body["vms"] = std::move(vms);
  ordered_json events;
  for (const auto& [name, n] : r.event_counts) events[name] = n;
  body["events"] = std::move(events);
  body["errors"] = r.errors;
  body["integrity"] = {{"writes_verified", r.writes_verified},
                       {"mismatches", r.integrity_mismatches}};
  body["poller_cycles_core_ps"] = r.poller_cycles;
  body["makespan_ps"] = r.makespan;
  return body;
}

void apply_costs(const json& j, telemetry::CostModel& cm) {
  for (const auto& [key, val] : j.items()) {
    bool known = false;
    for (const auto& f : kCostFields) {
      if (key == f.key) {
        cm.*(f.member) =
            static_cast<sim::Ps>(std::llround(val.get<double>() * 1000.0));
        known = true;
        break;
      }
    }
    if (!known)
      throw std::invalid_argument("unknown cost key: " + key);
  }
}

void apply_workload(const json& j, WorkloadSpec& w) {
  if (j.is_string()) {  // bare preset name
    auto p = preset(j.get<std::string>());
    if (!p) throw std::invalid_argument("unknown workload preset: " +
                                        j.get<std::string>());
    w = *p;
    return;
  }
  if (auto it = j.find("preset"); it != j.end()) {
    auto p = preset(it->get<std::string>());
    if (!p) throw std::invalid_argument("unknown workload preset: " +
                                        it->get<std::string>());
    w = *p;
  }
  for (const auto& [key, val] : j.items()) {
    if (key == "preset") continue;
    if (key == "rw") {
      auto rw = rw_from_string(val.get<std::string>());
      if (!rw) throw std::invalid_argument("unknown rw mode: " +
                                           val.get<std::string>());
      w.rw = *rw;
    } else if (key == "bs") {
      w.bs = val.get<std::uint32_t>();
    } else if (key == "numjobs") {
      w.numjobs = val.get<std::uint32_t>();
    } else if (key == "iodepth") {
      w.iodepth = val.get<std::uint32_t>();
    } else if (key == "total_ops") {
      w.total_ops = val.get<std::uint64_t>();
    } else if (key == "seed") {
      w.seed = val.get<std::uint64_t>();
    } else {
      throw std::invalid_argument("unknown workload key: " + key);
    }
  }
}

}  // namespace

ordered_json scenario_to_json(const Scenario& sc) {
  ordered_json j;
  j["backend"] = std::string(to_string(sc.backend));
  j["n_vms"] = sc.n_vms;
  j["n_ssds"] = sc.n_ssds;
  j["poller_cores"] = sc.poller_cores;
  j["n_queues"] = sc.n_queues;
  j["vm_capacity_blocks"] = sc.vm_capacity_blocks;
  j["ssd_blocks"] = sc.ssd_blocks;
  j["block_size"] = sc.block_size;
  j["seed"] = sc.seed;
  j["fetch_log"] = sc.fetch_log;
  ordered_json w;
  w["rw"] = std::string(to_string(sc.workload.rw));
  w["bs"] = sc.workload.bs;
  w["numjobs"] = sc.workload.numjobs;
  w["iodepth"] = sc.workload.iodepth;
  w["total_ops"] = sc.workload.total_ops;
  w["seed"] = sc.workload.seed;
  j["workload"] = std::move(w);
  ordered_json c;
  for (const auto& f : kCostFields)
    c[f.key] = static_cast<double>(sc.costs.*(f.member)) / 1000.0;
  j["costs"] = std::move(c);
  return j;
}

Scenario scenario_from_json(const json& j) {
  Scenario sc;
  for (const auto& [key, val] : j.items()) {
    if (key == "backend") {
      auto b = backend_from_string(val.get<std::string>());
      if (!b) throw std::invalid_argument("unknown backend: " +
                                          val.get<std::string>());
      sc.backend = *b;
    } else if (key == "n_vms") {
      sc.n_vms = val.get<std::uint32_t>();
    } else if (key == "n_ssds") {
      sc.n_ssds = val.get<std::uint32_t>();
    } else if (key == "poller_cores") {
      sc.poller_cores = val.get<int>();
    } else if (key == "n_queues") {
      sc.n_queues = val.get<std::uint32_t>();
    } else if (key == "vm_capacity_blocks") {
      sc.vm_capacity_blocks = val.get<std::uint64_t>();
    } else if (key == "ssd_blocks") {
      sc.ssd_blocks = val.get<std::uint64_t>();
    } else if (key == "block_size") {
      sc.block_size = val.get<std::uint32_t>();
    } else if (key == "seed") {
      sc.seed = val.get<std::uint64_t>();
    } else if (key == "fetch_log") {
      sc.fetch_log = val.get<bool>();
    } else if (key == "workload") {
      apply_workload(val, sc.workload);
    } else if (key == "costs") {
      apply_costs(val, sc.costs);
    } else {
      throw std::invalid_argument("unknown scenario key: " + key);
    }
  }
  return sc;
}

ordered_json report_json(const Scenario& sc, const RunResult& r) {
  ordered_json j;
  j["schema_version"] = 1;
  j["scenario"] = scenario_to_json(sc);
  ordered_json body = result_body(r);
  for (auto& [k, v] : body.items()) j[k] = std::move(v);
  return j;
}

ordered_json comparison_json(const Scenario& sc, const ComparisonResult& cr) {
  ordered_json j;
  j["schema_version"] = 1;
  j["scenario"] = scenario_to_json(sc);
  ordered_json runs = ordered_json::array();
  ordered_json summary;
  for (const auto& e : cr.runs) {
    ordered_json run;
    run["backend"] = std::string(to_string(e.backend));
    run["ok"] = e.ok;
    if (e.ok) {
      run["report"] = result_body(e.result);
      for (const auto& s : e.result.stats)
        if (s.vm == telemetry::kHostVm) {
          ordered_json row;
          row["iops"] = s.iops;
          row["mean_ns"] = s.mean_ns;
          row["p99_ns"] = s.p99_ns;
          summary[std::string(to_string(e.backend))] = std::move(row);
        }
    } else {
      run["error"] = e.error;
    }
    runs.push_back(std::move(run));
  }
  j["runs"] = std::move(runs);
  j["summary"] = std::move(summary);
  return j;
}

void write_csv(std::ostream& os, const std::vector<telemetry::VmStats>& rows) {
  os << "vm,iops,mean_ns,p99_ns,exits,faults,copies\n";
  char num[64];
  for (const auto& s : rows) {
    if (s.vm == telemetry::kHostVm) continue;
    os << s.vm;
    std::snprintf(num, sizeof num, ",%.3f,%.3f,%.3f", s.iops, s.mean_ns,
                  s.p99_ns);
    os << num << ',' << s.exits << ',' << s.faults << ',' << s.copies << '\n';
  }
}

void write_trace(std::ostream& os, const telemetry::EventLedger& ledger) {
  os << "t_ps,vm,kind,bytes,req\n";
  for (const auto& e : ledger.events())
    os << e.t << ',' << e.vm << ',' << telemetry::to_string(e.kind) << ','
       << e.bytes << ',' << e.req << '\n';
}

}  // namespace iovsim::harness
