// Conformance gate: ten checks, one PASS/FAIL line each, nonzero exit if any
// fail. Every tolerance is pinned here, in code, next to the check it guards.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "iovsim/harness/report.hpp"
#include "iovsim/harness/runner.hpp"
#include "iovsim/lightiov/guest.hpp"
#include "iovsim/lightiov/host.hpp"
#include "ring_property.hpp"

using namespace iovsim;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[240];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct MiniStack {
  sim::EventLoop loop;
  mem::HostMemory mem;
  telemetry::EventLedger led;
  telemetry::CostModel costs;
  mem::GpaRangeAllocator gpa;
  std::unique_ptr<nvme::NvmeController> ctrl;
  std::unique_ptr<lightiov::LightiovHost> host;

  explicit MiniStack(std::uint64_t total_blocks, bool fetch_log = false) {
    nvme::ControllerConfig cfg;
    cfg.total_blocks = total_blocks;
    cfg.fetch_log_enabled = fetch_log;
    ctrl = std::make_unique<nvme::NvmeController>(
        loop, mem, led, costs, std::make_unique<nvme::MemStore>(4096), cfg);
    ctrl->set_admin_queues(mem.alloc(32 * nvme::kSqeBytes),
                           mem.alloc(32 * nvme::kCqeBytes), 32);
    ctrl->enable();
    host = std::make_unique<lightiov::LightiovHost>(loop, mem, led, costs, gpa);
  }
};

// 1. Fast-path silence: after warm-up, a lightiov tenant runs with zero
//    exit-class events and zero faults; warm-up faults fit the page budget.
Outcome c1_fast_path_silence() {
  const auto t0 = std::chrono::steady_clock::now();
  harness::Scenario sc;
  sc.backend = harness::Backend::kLightiov;
  sc.n_vms = 1;
  sc.workload = *harness::preset("randread-4k-1-1");
  sc.workload.total_ops = 10000;
  harness::World w(sc);
  const harness::RunResult r = w.run();
  if (r.errors) return {false, "request errors"};

  const auto& reqs = w.ledger().requests();
  if (reqs.size() != 10000) return {false, "short run"};
  const sim::Ps t_warm = reqs[99].complete;  // warm-up = first 100 requests
  const auto after = [&](telemetry::EventKind k) {
    return w.ledger().count_after(k, 0, t_warm);
  };
  const std::uint64_t exits = after(telemetry::EventKind::vm_exit) +
                              after(telemetry::EventKind::intr_injected);
  const std::uint64_t faults = after(telemetry::EventKind::page_fault);
  const std::uint64_t warm =
      w.ledger().count(telemetry::EventKind::page_fault, 0);
  const std::uint64_t budget =
      w.lightiov_host()->resources(0).fault_budget_pages();
  const double secs = seconds_since(t0);
  return {exits == 0 && faults == 0 && warm <= budget && secs < 5.0,
          fmt("post-warm exits=%llu faults=%llu, warm faults %llu <= budget "
              "%llu, %.2f s",
              (unsigned long long)exits, (unsigned long long)faults,
              (unsigned long long)warm, (unsigned long long)budget, secs)};
}

// 2. One-fault rule: under provision/run/teardown churn, no (tenant, page)
//    ever faults twice. Tenant ids are never reused, so the key is exact.
Outcome c2_one_fault_rule() {
  std::uint64_t pages_seen = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    MiniStack s(1 << 22);
    sim::Rng rng(seed * 7919 + 13);
    std::int32_t next_vm = 0;
    std::map<std::int32_t, std::unique_ptr<lightiov::GuestDriver>> live;
    int provisioned = 0;

    auto provision_one = [&] {
      const std::int32_t vm = next_vm++;
      lightiov::ProvisionOptions opt;
      opt.queue_depth = 4 + static_cast<std::uint32_t>(rng.below(4)) * 4;
      opt.dram_bytes = 128 * 1024;
      const auto nq = static_cast<std::uint16_t>(1 + rng.below(2));
      const std::uint64_t cap = 64 + rng.below(4) * 64;
      s.host->provision_vm(vm, *s.ctrl, nq, cap, opt);
      auto g = std::make_unique<lightiov::GuestDriver>(*s.host, vm);
      g->init();
      const std::uint64_t buf = g->alloc_guest(4096);
      const int burst = 1 + static_cast<int>(rng.below(3));
      for (int i = 0; i < burst; ++i) {
        lightiov::GuestIoRequest q;
        q.write = true;
        q.vlba = rng.below(cap);
        q.blocks = 1;
        q.buffer_gpa = buf;
        q.tag = 1;
        if (g->submit(0, q) != lightiov::SubmitResult::kOk)
          throw std::runtime_error("churn submit rejected");
        s.loop.run();
      }
      live.emplace(vm, std::move(g));
      ++provisioned;
    };

    while (provisioned < 50) {
      if (!live.empty() && rng.below(100) < 25) {
        auto it = live.begin();
        std::advance(it, static_cast<long>(rng.below(live.size())));
        s.host->teardown_vm(it->first);
        s.loop.run();
        live.erase(it);
      } else {
        provision_one();
      }
    }
    for (auto& [vm, g] : live) {
      s.host->teardown_vm(vm);
      s.loop.run();
    }
    live.clear();

    std::map<std::pair<std::int32_t, std::uint64_t>, int> tally;
    for (const auto& e : s.led.events())
      if (e.kind == telemetry::EventKind::page_fault)
        ++tally[{e.vm, mem::page_of(e.bytes)}];
    for (const auto& [key, n] : tally)
      if (n > 1)
        return {false, fmt("seed %llu: vm %d page %llu faulted %d times",
                           (unsigned long long)seed, key.first,
                           (unsigned long long)key.second, n)};
    pages_seen += tally.size();
  }
  return {true, fmt("10 seeds x 50-VM churn, %llu faulted pages, all once",
                    (unsigned long long)pages_seen)};
}

// 3. Isolation fuzz: adversarial vlba / PRP storms are rejected at the guest
//    edge, the device log carries only the honest traffic, and a byte diff
//    of the namespace shows no write outside any tenant's own range.
Outcome c3_isolation_fuzz() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::uint64_t kCap = 2048;
  MiniStack s(4 * kCap, /*fetch_log=*/true);
  std::vector<std::unique_ptr<lightiov::GuestDriver>> g;
  std::vector<lightiov::VmResources> res;
  std::vector<std::uint64_t> bufs;
  for (std::int32_t vm = 0; vm < 4; ++vm) {
    res.push_back(s.host->provision_vm(vm, *s.ctrl, 1, kCap));
    g.push_back(std::make_unique<lightiov::GuestDriver>(*s.host, vm));
    g.back()->init();
    bufs.push_back(g.back()->alloc_guest(4096));
  }

  sim::Rng rng(104729);
  std::uint64_t accepted_bad = 0, good = 0;
  std::vector<std::set<std::uint64_t>> wrote(4);
  std::vector<std::uint64_t> expected_slba;

  for (std::uint64_t i = 0; i < 100000; ++i) {
    const auto vm = static_cast<std::uint32_t>(rng.below(4));
    lightiov::GuestIoRequest q;
    q.write = rng.below(2) == 1;
    q.blocks = 1;
    q.buffer_gpa = bufs[vm];
    q.tag = 99;
    const std::uint64_t kind = rng.below(3);
    if (kind == 0) {
      q.vlba = kCap + rng.below(1 << 20);  // out of range by any margin
    } else if (kind == 1) {
      q.vlba = rng.below(kCap);  // valid address, hostile buffer
      const std::uint64_t pick = rng.below(3);
      if (pick == 0)
        q.buffer_gpa =
            res[vm].dram.base + res[vm].dram.size + rng.below(1024) * 4096;
      else if (pick == 1)
        q.buffer_gpa = res[(vm + 1) % 4].dram.base;  // the neighbour's memory
      else
        q.buffer_gpa = lightiov::kGuestCmbGpa + rng.below(8) * 4096;
    } else {
      q.vlba = kCap - 1;  // fence straddle
      q.blocks = 2 + static_cast<std::uint32_t>(rng.below(31));
    }
    if (g[vm]->submit(0, q) == lightiov::SubmitResult::kOk) ++accepted_bad;

    if (i % 50 == 0) {  // honest traffic keeps flowing between attacks
      const std::uint64_t vlba = rng.below(kCap);
      std::vector<std::uint8_t> payload(4096);
      harness::pattern_fill(static_cast<std::int32_t>(vm), vlba, payload);
      s.host->guest_write(static_cast<std::int32_t>(vm), bufs[vm],
                          payload.data(), payload.size());
      lightiov::GuestIoRequest w;
      w.write = true;
      w.vlba = vlba;
      w.blocks = 1;
      w.buffer_gpa = bufs[vm];
      w.tag = 7;
      if (g[vm]->submit(0, w) != lightiov::SubmitResult::kOk)
        return {false, "honest request rejected"};
      ++good;
      wrote[vm].insert(vlba);
      expected_slba.push_back(res[vm].lba_start + vlba);
      s.loop.run();
    }
  }
  s.loop.run();

  const auto& log = s.ctrl->fetch_log();
  bool wire_clean = log.size() == good;
  for (std::size_t i = 0; wire_clean && i < log.size(); ++i)
    wire_clean = log[i].slba == expected_slba[i];

  std::set<std::uint64_t> expected_blocks;
  for (std::size_t vm = 0; vm < 4; ++vm)
    for (const auto vlba : wrote[vm])
      expected_blocks.insert(res[vm].lba_start + vlba);
  const auto touched = s.ctrl->store().touched_blocks();
  bool diff_clean =
      touched == std::vector<std::uint64_t>(expected_blocks.begin(),
                                            expected_blocks.end());
  std::vector<std::uint8_t> block(4096), want(4096);
  for (const auto b : touched) {
    if (!diff_clean) break;
    const auto vm = static_cast<std::int32_t>(b / kCap);
    s.ctrl->store().read_block(b, block);
    harness::pattern_fill(vm, b % kCap, want);
    diff_clean = block == want;
  }
  const double secs = seconds_since(t0);
  return {accepted_bad == 0 && wire_clean && diff_clean && secs < 30.0,
          fmt("100000 hostile submits, %llu accepted; wire %s; namespace "
              "diff %s; %.1f s",
              (unsigned long long)accepted_bad, wire_clean ? "clean" : "DIRTY",
              diff_clean ? "clean" : "DIRTY", secs)};
}

// 4. DMA disjointness: across scenario shapes, no two owners' mapped DMA
//    pages resolve to the same host frame (brute force over the table).
Outcome c4_dma_disjointness() {
  struct Shape {
    int vms, ssds, queues;
  };
  const Shape shapes[] = {{1, 1, 1}, {4, 1, 2}, {8, 2, 1}, {6, 3, 2}};
  std::uint64_t entries_total = 0;
  for (const auto& sh : shapes) {
    harness::Scenario sc;
    sc.backend = harness::Backend::kLightiov;
    sc.n_vms = sh.vms;
    sc.n_ssds = sh.ssds;
    sc.n_queues = sh.queues;
    sc.vm_capacity_blocks = 4096;
    sc.workload = *harness::preset("randwrite-4k-1-1");
    sc.workload.total_ops = 40;
    harness::World w(sc);
    if (w.run().errors) return {false, "run errors"};
    for (std::size_t i = 0; i < w.ssd_count(); ++i) {
      std::vector<std::pair<std::uint64_t, std::int32_t>> v;
      for (const auto& [dma, e] : w.ssd(i).dma().entries())
        v.emplace_back(e.hpa_page, e.owner);
      entries_total += v.size();
      for (std::size_t a = 0; a < v.size(); ++a)
        for (std::size_t b = 0; b < a; ++b)
          if (v[a].second != v[b].second && v[a].first == v[b].first)
            return {false,
                    fmt("hpa page %llu shared by owners %d and %d",
                        (unsigned long long)v[a].first, v[a].second,
                        v[b].second)};
    }
  }
  return {true, fmt("%llu mappings over 4 shapes, pairwise disjoint across "
                    "owners",
                    (unsigned long long)entries_total)};
}

// 5. Event-profile ordering per unbatched request: virtio >= 2 exit-class
//    events and exactly 2 copies; vhost exactly 1; lightiov exactly 0.
Outcome c5_event_profiles() {
  const struct {
    harness::Backend b;
    const char* name;
  } runs[] = {{harness::Backend::kLightiov, "lightiov"},
              {harness::Backend::kVhostPoll, "vhost_poll"},
              {harness::Backend::kVirtio, "virtio"}};
  for (const auto& run : runs) {
    harness::Scenario sc;
    sc.backend = run.b;
    sc.n_vms = 1;
    sc.vm_capacity_blocks = 4096;
    sc.workload = *harness::preset("randwrite-4k-1-1");  // QD1: no batching
    sc.workload.total_ops = 200;
    harness::World w(sc);
    if (w.run().errors) return {false, fmt("%s run errors", run.name)};
    if (w.ledger().requests().size() != 200)
      return {false, fmt("%s short run", run.name)};
    for (const auto& rr : w.ledger().requests()) {
      int exit_class = 0, copies = 0;
      for (const auto& e : w.ledger().trace(rr.req)) {
        exit_class += (e.kind == telemetry::EventKind::vm_exit ||
                       e.kind == telemetry::EventKind::intr_injected);
        copies += (e.kind == telemetry::EventKind::data_copy);
      }
      bool ok = true;
      switch (run.b) {
        case harness::Backend::kLightiov: ok = exit_class == 0; break;
        case harness::Backend::kVhostPoll: ok = exit_class == 1; break;
        case harness::Backend::kVirtio:
          ok = exit_class >= 2 && copies == 2;
          break;
      }
      if (!ok)
        return {false, fmt("%s req %llu: %d exit-class, %d copies", run.name,
                           (unsigned long long)rr.req, exit_class, copies)};
    }
  }
  return {true,
          "200 reqs each: virtio >=2 exits + 2 copies, vhost 1, lightiov 0"};
}

// 6. Capacity: 10,000 single-queue tenants provision on one controller; the
//    qid space then fills to 65,535 pairs and the 65,536th is refused.
Outcome c6_capacity() {
  const auto t0 = std::chrono::steady_clock::now();
  MiniStack s(10000 * 16 + 16);
  lightiov::ProvisionOptions opt;
  opt.queue_depth = 2;
  opt.dram_bytes = 4096;
  for (std::int32_t vm = 0; vm < 10000; ++vm)
    s.host->provision_vm(vm, *s.ctrl, 1, 16, opt);

  std::uint64_t created = 10000;
  while (created < 65535) {
    const std::uint16_t qid = s.ctrl->alloc_qid();
    nvme::Command c;
    c.opcode = nvme::kCreateIoCq;
    c.prp1 = s.mem.alloc(2 * nvme::kCqeBytes);
    c.cdw10 = qid | (1u << 16);
    c.cdw11 = 0x1;
    if (!s.ctrl->admin_execute(c).ok())
      return {false, fmt("cq %u refused early", qid)};
    c = nvme::Command{};
    c.opcode = nvme::kCreateIoSq;
    c.prp1 = s.mem.alloc(2 * nvme::kSqeBytes);
    c.cdw10 = qid | (1u << 16);
    c.cdw11 = (static_cast<std::uint32_t>(qid) << 16) | 0x1;
    if (!s.ctrl->admin_execute(c).ok())
      return {false, fmt("sq %u refused early", qid)};
    ++created;
  }

  bool qid_space_exhausted = false;
  try {
    (void)s.ctrl->alloc_qid();
  } catch (const std::exception&) {
    qid_space_exhausted = true;
  }
  nvme::Command dup;
  dup.opcode = nvme::kCreateIoCq;
  dup.prp1 = s.mem.alloc(2 * nvme::kCqeBytes);
  dup.cdw10 = 1 | (1u << 16);
  dup.cdw11 = 0x1;
  const bool dup_refused =
      s.ctrl->admin_execute(dup).status == nvme::kInvalidQueueIdentifier;
  const double secs = seconds_since(t0);
  return {qid_space_exhausted && dup_refused && secs < 60.0,
          fmt("10000 tenants + fill to 65535 pairs; 65536th refused, %.1f s",
              secs)};
}

// 7. Fairness at saturation: 8 tenants on 2 SSDs, Jain >= 0.99 and total
//    IOPS within 2% of the two devices' cost-model ceiling.
Outcome c7_fairness() {
  harness::Scenario sc;
  sc.backend = harness::Backend::kLightiov;
  sc.n_vms = 8;
  sc.n_ssds = 2;
  sc.workload = *harness::preset("randread-4k-4-128");
  sc.workload.total_ops = 10000;
  const harness::RunResult r = harness::run_scenario(sc);
  if (r.errors) return {false, "run errors"};

  std::vector<double> per_vm;
  for (const auto& row : r.stats)
    if (row.vm != telemetry::kHostVm) per_vm.push_back(row.iops);
  if (per_vm.size() != 8) return {false, "missing per-VM rows"};
  const double jain = telemetry::jain_fairness(per_vm);
  const double total = r.stats.back().iops;
  const double limit = 2 * harness::World::device_limit_iops(sc.costs, 4096);
  const double rel = std::fabs(total - limit) / limit;
  return {jain >= 0.99 && rel <= 0.02,
          fmt("jain=%.4f, %.0f IOPS vs ceiling %.0f (off %.2f%%)", jain, total,
              limit, rel * 100)};
}

// 8. Poller scaling: at fixed cores latency worsens 25 -> 200 tenants, and
//    doubling cores at 200 tenants strictly improves it.
Outcome c8_poller_scaling() {
  auto mean_ns = [](int vms, int cores) {
    harness::Scenario sc;
    sc.backend = harness::Backend::kVhostPoll;
    sc.n_vms = vms;
    sc.poller_cores = cores;
    sc.vm_capacity_blocks = 4096;
    sc.workload = *harness::preset("randread-4k-1-1");
    sc.workload.total_ops = 50;
    return harness::run_scenario(sc).stats.back().mean_ns;
  };
  const double m25 = mean_ns(25, 2);
  const double m200 = mean_ns(200, 2);
  const double m200x2 = mean_ns(200, 4);
  return {m200 > m25 && m200x2 < m200,
          fmt("mean ns: 25vm/2c %.0f, 200vm/2c %.0f, 200vm/4c %.0f", m25, m200,
              m200x2)};
}

// 9. Comparative latency: lightiov < vhost_poll < virtio, and the
//    lightiov-vs-virtio gap exceeds the 30% model floor.
Outcome c9_comparative_latency() {
  harness::Scenario sc;
  sc.n_vms = 1;
  sc.vm_capacity_blocks = 4096;
  sc.workload = *harness::preset("randread-4k-1-1");
  sc.workload.total_ops = 2000;
  const harness::ComparisonResult cr = harness::compare_backends(sc);
  if (!cr.all_ok()) return {false, "a backend failed to run"};
  std::map<harness::Backend, double> mean;
  for (const auto& e : cr.runs) mean[e.backend] = e.result.stats.back().mean_ns;
  const double li = mean[harness::Backend::kLightiov];
  const double vh = mean[harness::Backend::kVhostPoll];
  const double vi = mean[harness::Backend::kVirtio];
  const double gap = (vi - li) / vi;
  return {li < vh && vh < vi && gap > 0.30,
          fmt("mean ns %.1f < %.1f < %.1f, gap %.1f%% > 30%%", li, vh, vi,
              gap * 100)};
}

// 10. Determinism + ring conformance: identical seeds dump byte-identical
//     comparison reports; 1e6 randomized ring ops hold every protocol
//     invariant across >= 3 CQ wraps with the parking path exercised.
Outcome c10_determinism() {
  harness::Scenario sc;
  sc.n_vms = 2;
  sc.vm_capacity_blocks = 4096;
  sc.workload = *harness::preset("randwrite-4k-1-1");
  sc.workload.total_ops = 300;
  const auto a = harness::comparison_json(sc, harness::compare_backends(sc));
  const auto b = harness::comparison_json(sc, harness::compare_backends(sc));
  const bool identical = a.dump(2) == b.dump(2);

  const ringprop::Stats st = ringprop::drive(4242, 1'000'000, 64, 32);
  return {identical && st.completed == 1'000'000 && st.cq_wraps >= 3 &&
              st.deferred > 0,
          fmt("three-backend reports byte-identical; 1e6 ring ops, %llu "
              "wraps, %llu parked",
              (unsigned long long)st.cq_wraps,
              (unsigned long long)st.deferred)};
}

}  // namespace

int main() {
  const struct {
    const char* label;
    Outcome (*fn)();
  } criteria[] = {
      {"fast-path silence", c1_fast_path_silence},
      {"one-fault rule", c2_one_fault_rule},
      {"isolation fuzz", c3_isolation_fuzz},
      {"dma disjointness", c4_dma_disjointness},
      {"event profiles", c5_event_profiles},
      {"capacity / qid space", c6_capacity},
      {"fairness at saturation", c7_fairness},
      {"poller scaling", c8_poller_scaling},
      {"comparative latency", c9_comparative_latency},
      {"determinism + ring conformance", c10_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < std::size(criteria); ++i) {
    Outcome o;
    try {
      o = criteria[i].fn();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    std::printf("%s  %2zu  %-30s  %s\n", o.ok ? "PASS" : "FAIL", i + 1,
                criteria[i].label, o.detail.c_str());
    std::fflush(stdout);
    if (!o.ok) ++failed;
  }
  if (failed) std::printf("%d of 10 criteria failed\n", failed);
  return failed ? 1 : 0;
}
