// Command-line front end: run one scenario, compare backends on one
// scenario, or list the workload presets. Reports go to stdout unless
// --out/--csv/--trace name files. Exit status is 0 only when the run
// finished with zero I/O errors and a clean integrity sweep.

#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "iovsim/harness/report.hpp"

namespace {

iovsim::harness::Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return iovsim::harness::scenario_from_json(nlohmann::json::parse(in));
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace iovsim;

  CLI::App app{"iovsim: deterministic NVMe I/O virtualization simulator"};
  app.require_subcommand(1);

  std::string config, backend_flag, out_path, csv_path, trace_path;
  std::uint32_t vms = 0, ssds = 0;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "run one scenario, emit a report");
  run->add_option("--config", config, "scenario file (JSON)")->required();
  run->add_option("--backend", backend_flag,
                  "override: lightiov | virtio | vhost_poll");
  run->add_option("--vms", vms, "override: number of VMs");
  run->add_option("--ssds", ssds, "override: number of SSDs");
  run->add_option("--seed", seed, "override: run seed");
  run->add_option("--out", out_path, "report JSON path ('-' = stdout)");
  run->add_option("--csv", csv_path, "per-VM CSV path");
  run->add_option("--trace", trace_path, "raw event dump path");

  auto* cmp =
      app.add_subcommand("compare", "run all three backends, same scenario");
  cmp->add_option("--config", config, "scenario file (JSON)")->required();
  cmp->add_option("--seed", seed, "override: run seed");
  cmp->add_option("--out", out_path, "comparison JSON path ('-' = stdout)");

  auto* wl = app.add_subcommand("workloads", "workload preset utilities");
  wl->require_subcommand(1);
  wl->add_subcommand("list", "print the preset names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (wl->parsed()) {
      for (const auto& name : harness::preset_names()) std::cout << name << '\n';
      return 0;
    }

    harness::Scenario sc = load_scenario(config);
    if (run->parsed()) {
      if (run->count("--backend")) {
        auto b = harness::backend_from_string(backend_flag);
        if (!b) throw std::invalid_argument("unknown backend: " + backend_flag);
        sc.backend = *b;
      }
      if (run->count("--vms")) sc.n_vms = vms;
      if (run->count("--ssds")) sc.n_ssds = ssds;
      if (run->count("--seed")) sc.seed = seed;

      harness::World world(sc);
      world.provision();
      const harness::RunResult r = world.run();

      emit(out_path, harness::report_json(sc, r).dump(2) + "\n");
      if (!csv_path.empty()) {
        std::ostringstream os;
        harness::write_csv(os, r.stats);
        emit(csv_path, os.str());
      }
      if (!trace_path.empty()) {
        std::ostringstream os;
        harness::write_trace(os, world.ledger());
        emit(trace_path, os.str());
      }
      return (r.errors == 0 && r.integrity_mismatches == 0) ? 0 : 1;
    }

    // compare
    if (cmp->count("--seed")) sc.seed = seed;
    const harness::ComparisonResult cr = harness::compare_backends(sc);
    emit(out_path, harness::comparison_json(sc, cr).dump(2) + "\n");
    if (!cr.all_ok()) return 1;
    for (const auto& e : cr.runs)
      if (e.result.errors != 0 || e.result.integrity_mismatches != 0) return 1;
    return 0;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
}
