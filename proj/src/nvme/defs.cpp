#include "iovsim/nvme/defs.hpp"

#include <cstring>

namespace iovsim::nvme {

namespace {

void put16(std::uint8_t* p, std::uint16_t v) { std::memcpy(p, &v, 2); }
void put32(std::uint8_t* p, std::uint32_t v) { std::memcpy(p, &v, 4); }
void put64(std::uint8_t* p, std::uint64_t v) { std::memcpy(p, &v, 8); }
std::uint16_t get16(const std::uint8_t* p) { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
std::uint32_t get32(const std::uint8_t* p) { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
std::uint64_t get64(const std::uint8_t* p) { std::uint64_t v; std::memcpy(&v, p, 8); return v; }

}  // namespace

void Command::encode(std::uint8_t out[kSqeBytes]) const {
  std::memset(out, 0, kSqeBytes);
  out[0] = opcode;             // dw0[7:0]; fuse/psdt zero
  put16(out + 2, cid);         // dw0[31:16]
  put32(out + 4, nsid);        // dw1
  // dw2..dw5 (reserved, mptr) stay zero
  put64(out + 24, prp1);       // dw6-7
  put64(out + 32, prp2);       // dw8-9
  put32(out + 40, cdw10);
  put32(out + 44, cdw11);
  put32(out + 48, cdw12);
  put32(out + 52, cdw13);
  put32(out + 56, cdw14);
  put32(out + 60, cdw15);
}

Command Command::decode(const std::uint8_t in[kSqeBytes]) {
  Command c;
  c.opcode = in[0];
  c.cid = get16(in + 2);
  c.nsid = get32(in + 4);
  c.prp1 = get64(in + 24);
  c.prp2 = get64(in + 32);
  c.cdw10 = get32(in + 40);
  c.cdw11 = get32(in + 44);
  c.cdw12 = get32(in + 48);
  c.cdw13 = get32(in + 52);
  c.cdw14 = get32(in + 56);
  c.cdw15 = get32(in + 60);
  return c;
}

void Completion::encode(std::uint8_t out[kCqeBytes]) const {
  put32(out, result);
  put32(out + 4, 0);
  put16(out + 8, sq_head);
  put16(out + 10, sqid);
  put16(out + 12, cid);
  // dw3[31:17] status, dw3[16] phase
  put16(out + 14, static_cast<std::uint16_t>((status << 1) | (phase ? 1 : 0)));
}

Completion Completion::decode(const std::uint8_t in[kCqeBytes]) {
  Completion c;
  c.result = get32(in);
  c.sq_head = get16(in + 8);
  c.sqid = get16(in + 10);
  c.cid = get16(in + 12);
  const std::uint16_t sp = get16(in + 14);
  c.phase = (sp & 1) != 0;
  c.status = static_cast<std::uint16_t>(sp >> 1);
  return c;
}

}  // namespace iovsim::nvme
