#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace iovsim::nvme {

// Block-granular namespace backing. Reads of never-written blocks return
// zeros without allocating.
class BackingStore {
 public:
  virtual ~BackingStore() = default;
  virtual void write_block(std::uint64_t block, std::span<const std::uint8_t> data) = 0;
  virtual void read_block(std::uint64_t block, std::span<std::uint8_t> out) = 0;
  virtual std::uint32_t block_size() const = 0;
  // Blocks ever written, ascending; supports byte-level isolation sweeps.
  virtual std::vector<std::uint64_t> touched_blocks() const = 0;
};

class MemStore final : public BackingStore {
 public:
  explicit MemStore(std::uint32_t block_size) : bs_(block_size) {}
  void write_block(std::uint64_t block, std::span<const std::uint8_t> data) override;
  void read_block(std::uint64_t block, std::span<std::uint8_t> out) override;
  std::uint32_t block_size() const override { return bs_; }
  std::vector<std::uint64_t> touched_blocks() const override;

 private:
  std::uint32_t bs_;
  std::unordered_map<std::uint64_t, std::unique_ptr<std::uint8_t[]>> blocks_;
};

// Sparse flat file: byte offset = block * block_size. Unwritten holes read
// back as zeros courtesy of the filesystem.
class FileStore final : public BackingStore {
 public:
  FileStore(const std::string& path, std::uint32_t block_size);
  ~FileStore() override;
  void write_block(std::uint64_t block, std::span<const std::uint8_t> data) override;
  void read_block(std::uint64_t block, std::span<std::uint8_t> out) override;
  std::uint32_t block_size() const override { return bs_; }
  std::vector<std::uint64_t> touched_blocks() const override;

 private:
  std::uint32_t bs_;
  int fd_;
  std::vector<std::uint64_t> touched_;
};

}  // namespace iovsim::nvme
