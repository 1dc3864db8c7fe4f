#pragma once

#include <cstdint>

namespace iovsim::nvme {

constexpr std::uint16_t kAdminQid = 0;
constexpr std::uint16_t kMaxIoQpairs = 65535;  // I/O qids 1..65535
constexpr std::uint32_t kMinQueueDepth = 2;
constexpr std::uint32_t kMaxQueueDepth = 65536;
constexpr std::uint32_t kSqeBytes = 64;
constexpr std::uint32_t kCqeBytes = 16;
constexpr std::uint32_t kMemPage = 4096;  // PRP granule
constexpr std::uint32_t kIdentifyBytes = 4096;

enum AdminOpcode : std::uint8_t {
  kDeleteIoSq = 0x00,
  kCreateIoSq = 0x01,
  kDeleteIoCq = 0x04,
  kCreateIoCq = 0x05,
  kIdentify = 0x06,
  kSetFeatures = 0x09,
};

enum IoOpcode : std::uint8_t {
  kFlush = 0x00,
  kWrite = 0x01,
  kRead = 0x02,
};

constexpr std::uint8_t kFeatNumberOfQueues = 0x07;
constexpr std::uint32_t kCnsNamespace = 0x00;
constexpr std::uint32_t kCnsController = 0x01;

// 15-bit status field: (status-code-type << 8) | status-code.
enum Status : std::uint16_t {
  kSuccess = 0x000,
  kInvalidOpcode = 0x001,
  kInvalidField = 0x002,
  kDataTransferError = 0x004,
  kLbaOutOfRange = 0x080,
  kCompletionQueueInvalid = 0x100,
  kInvalidQueueIdentifier = 0x101,
};

// Submission entry. cdw10..15 carry the command-specific words; for I/O
// commands slba lives in cdw10/11 and the zero-based block count in
// cdw12[15:0]. Wire layout is the standard 64-byte SQE.
struct Command {
  std::uint8_t opcode = 0;
  std::uint16_t cid = 0;
  std::uint32_t nsid = 0;
  std::uint64_t prp1 = 0;
  std::uint64_t prp2 = 0;
  std::uint32_t cdw10 = 0, cdw11 = 0, cdw12 = 0, cdw13 = 0, cdw14 = 0, cdw15 = 0;

  std::uint64_t slba() const {
    return (static_cast<std::uint64_t>(cdw11) << 32) | cdw10;
  }
  void set_slba(std::uint64_t v) {
    cdw10 = static_cast<std::uint32_t>(v);
    cdw11 = static_cast<std::uint32_t>(v >> 32);
  }
  // Zero-based: 0 means one block.
  std::uint16_t nlb() const { return static_cast<std::uint16_t>(cdw12); }
  void set_nlb(std::uint16_t v) { cdw12 = (cdw12 & 0xffff0000u) | v; }
  std::uint32_t blocks() const { return static_cast<std::uint32_t>(nlb()) + 1; }

  void encode(std::uint8_t out[kSqeBytes]) const;
  static Command decode(const std::uint8_t in[kSqeBytes]);
};

// Completion entry; status is 15 bits plus the wrap-parity phase bit.
struct Completion {
  std::uint32_t result = 0;
  std::uint16_t sq_head = 0;
  std::uint16_t sqid = 0;
  std::uint16_t cid = 0;
  std::uint16_t status = 0;
  bool phase = false;

  bool ok() const { return status == kSuccess; }
  void encode(std::uint8_t out[kCqeBytes]) const;
  static Completion decode(const std::uint8_t in[kCqeBytes]);
};

// Identify buffer layout (subset, standard offsets).
constexpr std::uint32_t kIdCtrlVidOffset = 0;       // u16
constexpr std::uint32_t kIdCtrlMdtsOffset = 77;     // u8, 2^n pages
constexpr std::uint32_t kIdCtrlNnOffset = 516;      // u32
constexpr std::uint32_t kIdNsNszeOffset = 0;        // u64, blocks
constexpr std::uint32_t kIdNsNcapOffset = 8;        // u64
constexpr std::uint32_t kIdNsFlbasOffset = 26;      // u8
constexpr std::uint32_t kIdNsLbadsOffset = 130;     // u8, log2(block size)

}  // namespace iovsim::nvme
