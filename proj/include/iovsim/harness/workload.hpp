#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iovsim/sim/rng.hpp"

namespace iovsim::harness {

// fio vocabulary: read/write are sequential, rand* draw uniformly.
enum class RwMode { kRead, kWrite, kRandRead, kRandWrite };

bool is_write(RwMode m);
bool is_random(RwMode m);
std::string_view to_string(RwMode m);
std::optional<RwMode> rw_from_string(std::string_view s);

// One VM's load, fio style. total_ops is per VM and splits across jobs as
// evenly as possible (first total_ops % numjobs jobs get one extra).
struct WorkloadSpec {
  std::uint32_t bs = 4096;
  RwMode rw = RwMode::kRandRead;
  std::uint32_t numjobs = 1;
  std::uint32_t iodepth = 1;
  std::uint64_t total_ops = 10000;
  std::uint64_t seed = 0;  // folded into the scenario seed

  // "randread-4k-4-128" form: rw-bs-numjobs-iodepth.
  std::string name() const;
};

// The eight stock (bs, rw, numjobs, iodepth) tuples: the 4 KiB random pair
// and 128 KiB sequential pair at (4,128), plus all four modes at (1,1).
std::vector<std::string> preset_names();
std::optional<WorkloadSpec> preset(std::string_view name);

struct GenRequest {
  std::uint64_t vlba = 0;
  std::uint32_t blocks = 1;
  bool write = false;
};

// Deterministic request stream for one job. Sequential streams start at 0,
// advance by bs, and wrap when the next request would overrun the capacity;
// random streams draw vlba uniformly over [0, capacity - blocks]. Pacing
// (closed-loop iodepth) belongs to the caller; (spec, seed, vm, job) pins
// the sequence exactly.
class JobStream {
 public:
  JobStream(const WorkloadSpec& spec, std::uint64_t run_seed, std::int32_t vm,
            std::uint32_t job, std::uint64_t capacity_blocks,
            std::uint32_t block_size);

  GenRequest next();
  std::uint64_t quota() const { return quota_; }

 private:
  std::uint64_t capacity_;
  std::uint32_t blocks_;
  bool write_;
  bool random_;
  std::uint64_t quota_;
  std::uint64_t cursor_ = 0;
  sim::Rng rng_;
};

}  // namespace iovsim::harness
