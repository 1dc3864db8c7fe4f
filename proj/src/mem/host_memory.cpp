#include "iovsim/mem/host_memory.hpp"

#include <cstring>

namespace iovsim::mem {

std::uint64_t HostMemory::alloc(std::uint64_t bytes) {
  const std::uint64_t base = next_;
  next_ += pages_for(bytes ? bytes : 1) * kPageSize;
  return base;
}

std::uint8_t* HostMemory::page(std::uint64_t pg) {
  auto it = pages_.find(pg);
  if (it == pages_.end()) {
    auto mem = std::make_unique<std::uint8_t[]>(kPageSize);
    std::memset(mem.get(), 0, kPageSize);
    it = pages_.emplace(pg, std::move(mem)).first;
  }
  return it->second.get();
}

void HostMemory::write(std::uint64_t hpa, std::span<const std::uint8_t> data) {
  std::uint64_t a = hpa;
  std::size_t off = 0;
  while (off < data.size()) {
    const std::uint64_t in_page = a & (kPageSize - 1);
    const std::size_t n =
        std::min<std::size_t>(data.size() - off, kPageSize - in_page);
    std::memcpy(page(page_of(a)) + in_page, data.data() + off, n);
    a += n;
    off += n;
  }
  fire_hooks(hpa, data);
}

void HostMemory::read(std::uint64_t hpa, std::span<std::uint8_t> out) {
  std::uint64_t a = hpa;
  std::size_t off = 0;
  while (off < out.size()) {
    const std::uint64_t in_page = a & (kPageSize - 1);
    const std::size_t n =
        std::min<std::size_t>(out.size() - off, kPageSize - in_page);
    // Reading never-touched memory returns zeros without materializing it.
    auto it = pages_.find(page_of(a));
    if (it == pages_.end())
      std::memset(out.data() + off, 0, n);
    else
      std::memcpy(out.data() + off, it->second.get() + in_page, n);
    a += n;
    off += n;
  }
}

void HostMemory::write_u32(std::uint64_t hpa, std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  write(hpa, b);
}

void HostMemory::write_u64(std::uint64_t hpa, std::uint64_t v) {
  std::uint8_t b[8];
  std::memcpy(b, &v, 8);
  write(hpa, b);
}

std::uint32_t HostMemory::read_u32(std::uint64_t hpa) {
  std::uint8_t b[4];
  read(hpa, b);
  std::uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}

std::uint64_t HostMemory::read_u64(std::uint64_t hpa) {
  std::uint8_t b[8];
  read(hpa, b);
  std::uint64_t v;
  std::memcpy(&v, b, 8);
  return v;
}

void HostMemory::add_write_hook(std::uint64_t base, std::uint64_t bytes,
                                WriteHook hook) {
  hooks_.push_back(HookRange{base, bytes, std::move(hook)});
}

void HostMemory::fire_hooks(std::uint64_t hpa, std::span<const std::uint8_t> data) {
  for (const auto& h : hooks_) {
    if (hpa >= h.base + h.bytes || hpa + data.size() <= h.base) continue;
    std::uint64_t value = 0;
    std::memcpy(&value, data.data(), std::min<std::size_t>(data.size(), 8));
    h.hook(hpa, value, static_cast<std::uint32_t>(data.size()));
  }
}

}  // namespace iovsim::mem
