#include <cstring>
#include <map>
#include <memory>
#include <vector>

#include "doctest.h"
#include "iovsim/baselines/vhost.hpp"
#include "iovsim/baselines/virtio.hpp"

using namespace iovsim;
using namespace iovsim::baselines;
using lightiov::GuestIoRequest;
using lightiov::SubmitResult;

namespace {

struct Stack {
  sim::EventLoop loop;
  mem::HostMemory mem;
  telemetry::EventLedger led;
  telemetry::CostModel costs;
  mem::GpaRangeAllocator gpa;
  std::unique_ptr<nvme::NvmeController> ctrl;

  explicit Stack(std::uint64_t total_blocks, bool fetch_log = false) {
    nvme::ControllerConfig cfg;
    cfg.total_blocks = total_blocks;
    cfg.fetch_log_enabled = fetch_log;
    ctrl = std::make_unique<nvme::NvmeController>(
        loop, mem, led, costs, std::make_unique<nvme::MemStore>(4096), cfg);
    ctrl->set_admin_queues(mem.alloc(32 * nvme::kSqeBytes),
                           mem.alloc(32 * nvme::kCqeBytes), 32);
    ctrl->enable();
  }
};

GuestIoRequest one_block(std::uint64_t vlba, std::uint64_t buf, bool write,
                         std::uint64_t tag) {
  GuestIoRequest r;
  r.write = write;
  r.vlba = vlba;
  r.blocks = 1;
  r.buffer_gpa = buf;
  r.tag = tag;
  return r;
}

}  // namespace

TEST_CASE("virtio request pays one kick, two copies, one injection") {
  Stack s(2000, /*fetch_log=*/true);
  VirtioVmDevice::Config cfg;
  cfg.vm = 0;
  cfg.lba_start = 100;
  cfg.lba_size = 1000;
  VirtioVmDevice dev(s.loop, s.mem, s.led, s.costs, s.gpa, *s.ctrl, cfg);
  dev.init();
  std::vector<std::pair<std::uint64_t, std::uint16_t>> done;
  dev.set_completion_handler(
      [&](std::uint64_t tag, std::uint16_t st) { done.emplace_back(tag, st); });

  const std::uint64_t buf = dev.alloc_guest(4096);
  std::vector<std::uint8_t> payload(4096);
  for (std::size_t i = 0; i < payload.size(); ++i)
    payload[i] = static_cast<std::uint8_t>(i * 13);
  s.mem.write(dev.guest_hpa(buf), payload);

  REQUIRE(dev.submit(one_block(7, buf, true, 55)) == SubmitResult::kOk);
  dev.kick();
  s.loop.run();

  REQUIRE(done.size() == 1);
  CHECK(done[0].first == 55);
  CHECK(done[0].second == 0);
  // A kick covering one request carries its tag.
  std::uint64_t kicks = 0;
  for (const auto& e : s.led.events())
    if (e.kind == telemetry::EventKind::vm_exit && e.vm == 0) {
      ++kicks;
      CHECK(e.req == 55);
    }
  CHECK(kicks == 1);
  CHECK(s.led.count(telemetry::EventKind::data_copy, 0) == 2);
  CHECK(s.led.count(telemetry::EventKind::intr_injected, 0) == 1);

  // The write was relocated and the payload really moved through the bounce.
  REQUIRE(s.ctrl->fetch_log().size() == 1);
  CHECK(s.ctrl->fetch_log()[0].slba == 107);
  std::vector<std::uint8_t> block(4096);
  s.ctrl->store().read_block(107, block);
  CHECK(std::memcmp(block.data(), payload.data(), 4096) == 0);

  // Read it back through the device into a fresh buffer.
  const std::uint64_t rbuf = dev.alloc_guest(4096);
  REQUIRE(dev.submit(one_block(7, rbuf, false, 56)) == SubmitResult::kOk);
  dev.kick();
  s.loop.run();
  REQUIRE(done.size() == 2);
  CHECK(done[1].second == 0);
  std::vector<std::uint8_t> got(4096);
  s.mem.read(dev.guest_hpa(rbuf), got);
  CHECK(std::memcmp(got.data(), payload.data(), 4096) == 0);
}

TEST_CASE("virtio batches amortize the kick but never the copies") {
  Stack s(2000);
  VirtioVmDevice::Config cfg;
  cfg.vm = 4;
  cfg.lba_size = 1000;
  VirtioVmDevice dev(s.loop, s.mem, s.led, s.costs, s.gpa, *s.ctrl, cfg);
  dev.init();
  int done = 0;
  dev.set_completion_handler([&](std::uint64_t, std::uint16_t st) {
    CHECK(st == 0);
    ++done;
  });

  const std::uint64_t buf = dev.alloc_guest(8 * 4096);
  for (int i = 0; i < 8; ++i)
    REQUIRE(dev.submit(one_block(i, buf + i * 4096, true, i)) ==
            SubmitResult::kOk);
  dev.kick();
  s.loop.run();

  CHECK(done == 8);
  CHECK(s.led.count(telemetry::EventKind::vm_exit, 4) == 1);
  // A batched kick belongs to no single request.
  for (const auto& e : s.led.events())
    if (e.kind == telemetry::EventKind::vm_exit && e.vm == 4)
      CHECK(e.req == 0);
  CHECK(s.led.count(telemetry::EventKind::intr_injected, 4) == 8);
  CHECK(s.led.count(telemetry::EventKind::data_copy, 4) == 16);

  // A kick with nothing new queued costs nothing.
  const auto exits = s.led.count(telemetry::EventKind::vm_exit, 4);
  dev.kick();
  s.loop.run();
  CHECK(s.led.count(telemetry::EventKind::vm_exit, 4) == exits);
}

TEST_CASE("virtio ring exhaustion refuses a request needing three descs") {
  Stack s(2000);
  VirtioVmDevice::Config cfg;
  cfg.vm = 0;
  cfg.ring_size = 6;  // room for exactly two 3-descriptor chains
  cfg.lba_size = 1000;
  VirtioVmDevice dev(s.loop, s.mem, s.led, s.costs, s.gpa, *s.ctrl, cfg);
  dev.init();
  dev.set_completion_handler([](std::uint64_t, std::uint16_t) {});

  const std::uint64_t buf = dev.alloc_guest(3 * 4096);
  CHECK(dev.submit(one_block(0, buf, true, 1)) == SubmitResult::kOk);
  CHECK(dev.submit(one_block(1, buf + 4096, true, 2)) == SubmitResult::kOk);
  CHECK(dev.submit(one_block(2, buf + 8192, true, 3)) ==
        SubmitResult::kQueueFull);
  CHECK(dev.in_flight() == 2);
  dev.kick();
  s.loop.run();
  CHECK(dev.in_flight() == 0);
  // Freed descriptors make the refused request admissible.
  CHECK(dev.submit(one_block(2, buf + 8192, true, 3)) == SubmitResult::kOk);
  dev.kick();
  s.loop.run();
}

TEST_CASE("an idle poller burns exactly one tick per sweep per core") {
  Stack s(100);
  VhostPoller p(s.loop, s.mem, s.led, s.costs, VhostPoller::Config{1});
  const sim::Ps horizon = 1000 * s.costs.tick_ps;
  s.loop.at(horizon, [&] { p.stop(); });  // lands before that instant's sweep
  p.start();
  s.loop.run();
  CHECK(p.cycles() == 1000 * s.costs.tick_ps);
  CHECK(s.led.count(telemetry::EventKind::poller_cycle) == 1000);
  for (const auto& e : s.led.events())
    if (e.kind == telemetry::EventKind::poller_cycle)
      CHECK(e.bytes == s.costs.tick_ps);

  // Doubling the cores doubles the burn for the same wall time.
  Stack s2(100);
  VhostPoller p2(s2.loop, s2.mem, s2.led, s2.costs, VhostPoller::Config{2});
  s2.loop.at(10 * s2.costs.tick_ps, [&] { p2.stop(); });
  p2.start();
  s2.loop.run();
  CHECK(p2.cycles() == 2 * 10 * s2.costs.tick_ps);
}

TEST_CASE("vhost data path: relocation, zero exits, zero copies") {
  Stack s(4000, /*fetch_log=*/true);
  VhostPoller p(s.loop, s.mem, s.led, s.costs, VhostPoller::Config{1});
  VhostVmDevice::Config cfg;
  cfg.vm = 2;
  cfg.lba_start = 2000;
  cfg.lba_size = 1000;
  VhostVmDevice dev(s.loop, s.mem, s.led, s.costs, s.gpa, *s.ctrl, p, cfg);
  dev.init();
  std::vector<std::pair<std::uint64_t, std::uint16_t>> done;
  dev.set_completion_handler(
      [&](std::uint64_t tag, std::uint16_t st) { done.emplace_back(tag, st); });

  const std::uint64_t buf = dev.alloc_guest(4096);
  std::vector<std::uint8_t> payload(4096, 0xa5);
  s.mem.write(dev.guest_hpa(buf), payload);

  p.start();
  for (int i = 0; i < 3; ++i) {
    REQUIRE(dev.submit(one_block(10 + i, buf, true, 100 + i)) ==
            SubmitResult::kOk);
    s.loop.run_until([&] { return done.size() == static_cast<std::size_t>(i + 1); });
  }
  p.stop();
  s.loop.run();

  REQUIRE(done.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(done[i].first == 100u + i);
    CHECK(done[i].second == 0);
  }
  // The poller relocated every command; the guest never left guest mode and
  // the device DMAs the guest's own premapped pages.
  const auto& log = s.ctrl->fetch_log();
  REQUIRE(log.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(log[i].slba == 2010u + i);
  CHECK(s.led.count(telemetry::EventKind::vm_exit, 2) == 0);
  CHECK(s.led.count(telemetry::EventKind::data_copy, 2) == 0);
  CHECK(s.led.count(telemetry::EventKind::intr_injected, 2) == 3);
  std::vector<std::uint8_t> block(4096);
  s.ctrl->store().read_block(2012, block);
  CHECK(std::memcmp(block.data(), payload.data(), 4096) == 0);
}

TEST_CASE("the poller gates a bad vlba before the device ever sees it") {
  Stack s(4000, /*fetch_log=*/true);
  VhostPoller p(s.loop, s.mem, s.led, s.costs, VhostPoller::Config{1});
  VhostVmDevice::Config cfg;
  cfg.vm = 0;
  cfg.lba_start = 1000;
  cfg.lba_size = 500;
  VhostVmDevice dev(s.loop, s.mem, s.led, s.costs, s.gpa, *s.ctrl, p, cfg);
  dev.init();
  std::map<std::uint64_t, std::uint16_t> statuses;
  dev.set_completion_handler(
      [&](std::uint64_t tag, std::uint16_t st) { statuses[tag] = st; });

  const std::uint64_t buf = dev.alloc_guest(4096);
  // In-range fence post, then first block past the end. The shadow queue
  // accepts both; only the poller knows the physical bounds.
  REQUIRE(dev.submit(one_block(499, buf, true, 1)) == SubmitResult::kOk);
  REQUIRE(dev.submit(one_block(500, buf, true, 2)) == SubmitResult::kOk);
  p.start();
  s.loop.run_until([&] { return statuses.size() == 2; });
  p.stop();
  s.loop.run();

  REQUIRE(statuses.size() == 2);
  CHECK(statuses.at(1) == 0);
  CHECK(statuses.at(2) == nvme::kLbaOutOfRange);
  REQUIRE(s.ctrl->fetch_log().size() == 1);
  CHECK(s.ctrl->fetch_log()[0].slba == 1499);
}

TEST_CASE("a full shadow queue is refused at the guest edge") {
  Stack s(4000);
  VhostPoller p(s.loop, s.mem, s.led, s.costs, VhostPoller::Config{1});
  VhostVmDevice::Config cfg;
  cfg.vm = 0;
  cfg.queue_depth = 4;  // three usable slots
  cfg.lba_size = 1000;
  VhostVmDevice dev(s.loop, s.mem, s.led, s.costs, s.gpa, *s.ctrl, p, cfg);
  dev.init();
  int done = 0;
  dev.set_completion_handler([&](std::uint64_t, std::uint16_t) { ++done; });

  const std::uint64_t buf = dev.alloc_guest(4096);
  CHECK(dev.submit(one_block(0, buf, true, 1)) == SubmitResult::kOk);
  CHECK(dev.submit(one_block(1, buf, true, 2)) == SubmitResult::kOk);
  CHECK(dev.submit(one_block(2, buf, true, 3)) == SubmitResult::kOk);
  CHECK(dev.submit(one_block(3, buf, true, 4)) == SubmitResult::kQueueFull);
  CHECK(dev.in_flight() == 3);
  p.start();
  s.loop.run_until([&] { return done == 3; });
  p.stop();
  s.loop.run();
  CHECK(done == 3);
  CHECK(dev.in_flight() == 0);
}
