#include "iovsim/harness/workload.hpp"

#include <stdexcept>

namespace iovsim::harness {

bool is_write(RwMode m) { return m == RwMode::kWrite || m == RwMode::kRandWrite; }
bool is_random(RwMode m) {
  return m == RwMode::kRandRead || m == RwMode::kRandWrite;
}

std::string_view to_string(RwMode m) {
  switch (m) {
    case RwMode::kRead: return "read";
    case RwMode::kWrite: return "write";
    case RwMode::kRandRead: return "randread";
    case RwMode::kRandWrite: return "randwrite";
  }
  return "?";
}

std::optional<RwMode> rw_from_string(std::string_view s) {
  if (s == "read") return RwMode::kRead;
  if (s == "write") return RwMode::kWrite;
  if (s == "randread") return RwMode::kRandRead;
  if (s == "randwrite") return RwMode::kRandWrite;
  return std::nullopt;
}

std::string WorkloadSpec::name() const {
  std::string bs_s = bs % 1024 == 0 ? std::to_string(bs / 1024) + "k"
                                    : std::to_string(bs) + "b";
  return std::string(to_string(rw)) + "-" + bs_s + "-" +
         std::to_string(numjobs) + "-" + std::to_string(iodepth);
}

namespace {
const struct {
  const char* name;
  std::uint32_t bs;
  RwMode rw;
  std::uint32_t numjobs, iodepth;
} kPresets[] = {
    {"randread-4k-4-128", 4096, RwMode::kRandRead, 4, 128},
    {"randwrite-4k-4-128", 4096, RwMode::kRandWrite, 4, 128},
    {"read-128k-4-128", 131072, RwMode::kRead, 4, 128},
    {"write-128k-4-128", 131072, RwMode::kWrite, 4, 128},
    {"randread-4k-1-1", 4096, RwMode::kRandRead, 1, 1},
    {"randwrite-4k-1-1", 4096, RwMode::kRandWrite, 1, 1},
    {"read-4k-1-1", 4096, RwMode::kRead, 1, 1},
    {"write-4k-1-1", 4096, RwMode::kWrite, 1, 1},
};
}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : kPresets) out.emplace_back(p.name);
  return out;
}

std::optional<WorkloadSpec> preset(std::string_view name) {
  for (const auto& p : kPresets) {
    if (name != p.name) continue;
    WorkloadSpec s;
    s.bs = p.bs;
    s.rw = p.rw;
    s.numjobs = p.numjobs;
    s.iodepth = p.iodepth;
    return s;
  }
  return std::nullopt;
}

JobStream::JobStream(const WorkloadSpec& spec, std::uint64_t run_seed,
                     std::int32_t vm, std::uint32_t job,
                     std::uint64_t capacity_blocks, std::uint32_t block_size)
    : capacity_(capacity_blocks),
      write_(is_write(spec.rw)),
      random_(is_random(spec.rw)),
      rng_(sim::Rng::combine(
          sim::Rng::combine(sim::Rng::combine(run_seed, spec.seed),
                            static_cast<std::uint64_t>(vm)),
          job)) {
  if (spec.bs == 0 || block_size == 0 || spec.bs % block_size != 0)
    throw std::invalid_argument("bs must be a positive multiple of block_size");
  blocks_ = spec.bs / block_size;
  if (blocks_ > capacity_)
    throw std::invalid_argument("bs exceeds VM capacity");
  if (spec.iodepth == 0) throw std::invalid_argument("iodepth must be >= 1");
  if (spec.numjobs == 0) throw std::invalid_argument("numjobs must be >= 1");
  quota_ = spec.total_ops / spec.numjobs +
           (job < spec.total_ops % spec.numjobs ? 1 : 0);
}

GenRequest JobStream::next() {
  GenRequest r;
  r.blocks = blocks_;
  r.write = write_;
  if (random_) {
    r.vlba = rng_.below(capacity_ - blocks_ + 1);
    return r;
  }
  r.vlba = cursor_;
  cursor_ += blocks_;
  if (cursor_ + blocks_ > capacity_) cursor_ = 0;
  return r;
}

}  // namespace iovsim::harness
