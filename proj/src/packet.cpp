#include "racksim/packet.hpp"

namespace racksim {

namespace {

void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(static_cast<uint8_t>(v >> 24));
  b.push_back(static_cast<uint8_t>(v >> 16));
  b.push_back(static_cast<uint8_t>(v >> 8));
  b.push_back(static_cast<uint8_t>(v));
}

void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  put_u32(b, static_cast<uint32_t>(v >> 32));
  put_u32(b, static_cast<uint32_t>(v));
}

struct Reader {
  const uint8_t* p;
  size_t left;
  uint8_t u8() {
    need(1);
    left--;
    return *p++;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
                 (uint32_t(p[2]) << 8) | uint32_t(p[3]);
    p += 4;
    left -= 4;
    return v;
  }
  uint64_t u64() {
    uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  void need(size_t n) const {
    if (left < n)
      throw PacketError(PacketError::Reason::kTruncated, "truncated packet");
  }
};

}  // namespace

const char* to_string(OpCode op) {
  switch (op) {
    case OpCode::kCreateVssd: return "create_vssd";
    case OpCode::kDelVssd: return "del_vssd";
    case OpCode::kWrite: return "write";
    case OpCode::kRead: return "read";
    case OpCode::kGcOp: return "gc_op";
  }
  return "?";
}

const char* to_string(GcCode gc) {
  switch (gc) {
    case GcCode::kSoft: return "soft";
    case GcCode::kRegular: return "regular";
    case GcCode::kBg: return "bg";
    case GcCode::kAccept: return "accept";
    case GcCode::kDelay: return "delay";
    case GcCode::kFinish: return "finish";
  }
  return "?";
}

bool Packet::operator==(const Packet& o) const {
  if (src != o.src || dst != o.dst || op != o.op || vssd_id != o.vssd_id ||
      lat != o.lat)
    return false;
  switch (op) {
    case OpCode::kCreateVssd:
      return server_ip == o.server_ip && replica_vssd_id == o.replica_vssd_id &&
             replica_server_ip == o.replica_server_ip;
    case OpCode::kDelVssd:
      return true;
    case OpCode::kWrite:
    case OpCode::kRead:
      return lba == o.lba && len == o.len;
    case OpCode::kGcOp:
      return gc == o.gc;
  }
  return true;
}

std::vector<uint8_t> encode(const Packet& p) {
  std::vector<uint8_t> b;
  b.reserve(kEnvelopeBytes + kHeaderBytes + 12);
  put_u32(b, p.src);
  put_u32(b, p.dst);
  put_u8(b, static_cast<uint8_t>(p.op));
  put_u32(b, p.vssd_id);
  put_u32(b, p.lat);
  switch (p.op) {
    case OpCode::kCreateVssd:
      put_u32(b, p.server_ip);
      put_u32(b, p.replica_vssd_id);
      put_u32(b, p.replica_server_ip);
      break;
    case OpCode::kDelVssd:
      break;
    case OpCode::kWrite:
    case OpCode::kRead:
      put_u64(b, p.lba);
      put_u32(b, p.len);
      break;
    case OpCode::kGcOp:
      put_u8(b, static_cast<uint8_t>(p.gc));
      break;
  }
  return b;
}

Packet decode(const uint8_t* data, size_t size) {
  Reader r{data, size};
  Packet p;
  p.src = r.u32();
  p.dst = r.u32();
  uint8_t op = r.u8();
  if (op > static_cast<uint8_t>(OpCode::kGcOp))
    throw PacketError(PacketError::Reason::kBadOpCode,
                      "unknown opcode byte " + std::to_string(op));
  p.op = static_cast<OpCode>(op);
  p.vssd_id = r.u32();
  p.lat = r.u32();
  switch (p.op) {
    case OpCode::kCreateVssd:
      p.server_ip = r.u32();
      p.replica_vssd_id = r.u32();
      p.replica_server_ip = r.u32();
      break;
    case OpCode::kDelVssd:
      break;
    case OpCode::kWrite:
    case OpCode::kRead:
      p.lba = r.u64();
      p.len = r.u32();
      break;
    case OpCode::kGcOp: {
      uint8_t gc = r.u8();
      if (gc > static_cast<uint8_t>(GcCode::kFinish))
        throw PacketError(PacketError::Reason::kBadGcCode,
                          "unknown gc code byte " + std::to_string(gc));
      p.gc = static_cast<GcCode>(gc);
      break;
    }
  }
  return p;
}

void append_trace_record(std::vector<uint8_t>& out, const Packet& p) {
  std::vector<uint8_t> b = encode(p);
  put_u32(out, static_cast<uint32_t>(b.size()));
  out.insert(out.end(), b.begin(), b.end());
}

std::vector<Packet> parse_trace(const uint8_t* data, size_t size) {
  std::vector<Packet> v;
  Reader r{data, size};
  while (r.left > 0) {
    uint32_t n = r.u32();
    r.need(n);
    v.push_back(decode(r.p, n));
    r.p += n;
    r.left -= n;
  }
  return v;
}

}  // namespace racksim
