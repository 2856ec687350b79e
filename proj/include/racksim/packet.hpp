#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "racksim/sim_time.hpp"

namespace racksim {

enum class OpCode : uint8_t {
  kCreateVssd = 0,
  kDelVssd = 1,
  kWrite = 2,
  kRead = 3,
  kGcOp = 4,
};

// Numerals are part of the wire format and must not change.
enum class GcCode : uint8_t {
  kSoft = 0,
  kRegular = 1,
  kBg = 2,
  kAccept = 3,
  kDelay = 4,
  kFinish = 5,
};

const char* to_string(OpCode op);
const char* to_string(GcCode gc);

// LAT field unit: one tick = 64 ns. A 32-bit field then spans ~4.6 minutes
// of accumulated latency.
constexpr int64_t kLatTickNs = 64;

inline uint32_t lat_ticks_from_ns(SimTime ns) {
  if (ns <= 0) return 0;
  int64_t t = (ns + kLatTickNs / 2) / kLatTickNs;  // round half up
  return t > 0xffffffffLL ? 0xffffffffu : static_cast<uint32_t>(t);
}

inline SimTime ns_from_lat_ticks(uint32_t ticks) {
  return static_cast<SimTime>(ticks) * kLatTickNs;
}

// Coordination message flowing client <-> switch <-> server. src/dst model
// the routing envelope; the coordination header proper is
// OP(1) + vSSD_ID(4) + LAT(4) = 9 bytes, followed by an op-dependent payload.
struct Packet {
  uint32_t src = 0;
  uint32_t dst = 0;
  OpCode op = OpCode::kRead;
  uint32_t vssd_id = 0;
  uint32_t lat = 0;  // accumulated network latency, 64 ns ticks

  // payload, per op:
  GcCode gc = GcCode::kSoft;        // GC_OP
  uint32_t server_ip = 0;           // CREATE_VSSD
  uint32_t replica_vssd_id = 0;     // CREATE_VSSD
  uint32_t replica_server_ip = 0;   // CREATE_VSSD
  uint64_t lba = 0;                 // READ / WRITE
  uint32_t len = 0;                 // READ / WRITE

  bool operator==(const Packet& o) const;
};

class PacketError : public std::runtime_error {
 public:
  enum class Reason { kTruncated, kBadOpCode, kBadGcCode };
  PacketError(Reason r, const std::string& what)
      : std::runtime_error(what), reason(r) {}
  Reason reason;
};

constexpr size_t kEnvelopeBytes = 8;  // src + dst
constexpr size_t kHeaderBytes = 9;    // OP + vSSD_ID + LAT

// Fixed layout, all multi-byte fields big-endian:
//   src(4) dst(4) | OP(1) vSSD_ID(4) LAT(4) | payload
// payload: CREATE_VSSD -> server_ip(4) replica_vssd_id(4) replica_server_ip(4)
//          DEL_VSSD    -> empty
//          WRITE/READ  -> lba(8) len(4)
//          GC_OP       -> gc(1)
std::vector<uint8_t> encode(const Packet& p);
Packet decode(const uint8_t* data, size_t size);
inline Packet decode(const std::vector<uint8_t>& b) { return decode(b.data(), b.size()); }

// LAT accumulation for one hop, in ticks. Saturates at the 32-bit ceiling
// instead of wrapping.
inline Packet add_hop_latency(Packet p, uint64_t hop_ticks) {
  uint64_t v = static_cast<uint64_t>(p.lat) + hop_ticks;
  p.lat = v > 0xffffffffULL ? 0xffffffffu : static_cast<uint32_t>(v);
  return p;
}

// Length-prefixed (u32 BE) record framing for binary packet-trace files.
void append_trace_record(std::vector<uint8_t>& out, const Packet& p);
std::vector<Packet> parse_trace(const uint8_t* data, size_t size);

}  // namespace racksim
