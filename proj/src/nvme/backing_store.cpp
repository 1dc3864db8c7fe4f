#include "iovsim/nvme/backing_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cassert>
#include <cstring>
#include <stdexcept>

namespace iovsim::nvme {

void MemStore::write_block(std::uint64_t block, std::span<const std::uint8_t> data) {
  assert(data.size() == bs_);
  auto it = blocks_.find(block);
  if (it == blocks_.end())
    it = blocks_.emplace(block, std::make_unique<std::uint8_t[]>(bs_)).first;
  std::memcpy(it->second.get(), data.data(), bs_);
}

void MemStore::read_block(std::uint64_t block, std::span<std::uint8_t> out) {
  assert(out.size() == bs_);
  auto it = blocks_.find(block);
  if (it == blocks_.end())
    std::memset(out.data(), 0, bs_);
  else
    std::memcpy(out.data(), it->second.get(), bs_);
}

std::vector<std::uint64_t> MemStore::touched_blocks() const {
  std::vector<std::uint64_t> v;
  v.reserve(blocks_.size());
  for (const auto& [b, _] : blocks_) v.push_back(b);
  std::sort(v.begin(), v.end());
  return v;
}

FileStore::FileStore(const std::string& path, std::uint32_t block_size)
    : bs_(block_size) {
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
  if (fd_ < 0) throw std::runtime_error("cannot open backing file: " + path);
}

FileStore::~FileStore() {
  if (fd_ >= 0) ::close(fd_);
}

void FileStore::write_block(std::uint64_t block, std::span<const std::uint8_t> data) {
  assert(data.size() == bs_);
  const auto off = static_cast<off_t>(block * bs_);
  if (::pwrite(fd_, data.data(), bs_, off) != static_cast<ssize_t>(bs_))
    throw std::runtime_error("backing file write failed");
  touched_.push_back(block);
}

void FileStore::read_block(std::uint64_t block, std::span<std::uint8_t> out) {
  assert(out.size() == bs_);
  const auto off = static_cast<off_t>(block * bs_);
  const ssize_t n = ::pread(fd_, out.data(), bs_, off);
  if (n < 0) throw std::runtime_error("backing file read failed");
  if (static_cast<std::size_t>(n) < bs_)
    std::memset(out.data() + n, 0, bs_ - static_cast<std::size_t>(n));
}

std::vector<std::uint64_t> FileStore::touched_blocks() const {
  auto v = touched_;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace iovsim::nvme
