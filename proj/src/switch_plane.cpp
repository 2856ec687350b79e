#include "racksim/switch_plane.hpp"

#include <stdexcept>

namespace racksim {

Packet TorSwitch::register_vssd(const Packet& pkt) {
  if (pkt.op != OpCode::kCreateVssd)
    throw std::invalid_argument("register_vssd wants a create_vssd packet");
  if (replica_.count(pkt.vssd_id))
    throw std::invalid_argument("vssd already registered: " +
                                std::to_string(pkt.vssd_id));
  if (replica_.size() >= cfg_.capacity)
    throw std::length_error("switch table capacity reached");
  replica_[pkt.vssd_id] = ReplicaEntry{0, pkt.replica_vssd_id};
  dest_[pkt.vssd_id] = DestEntry{pkt.server_ip, 0};
  Packet ack = pkt;
  ack.dst = pkt.src;
  ack.src = cfg_.switch_ip;
  return ack;
}

Packet TorSwitch::deregister_vssd(const Packet& pkt) {
  if (pkt.op != OpCode::kDelVssd)
    throw std::invalid_argument("deregister_vssd wants a del_vssd packet");
  auto it = replica_.find(pkt.vssd_id);
  if (it == replica_.end())
    throw std::invalid_argument("vssd not registered: " +
                                std::to_string(pkt.vssd_id));
  replica_.erase(it);
  dest_.erase(pkt.vssd_id);
  Packet ack = pkt;
  ack.dst = pkt.src;
  ack.src = cfg_.switch_ip;
  return ack;
}

const ReplicaEntry* TorSwitch::replica_entry(uint32_t vssd_id) const {
  auto it = replica_.find(vssd_id);
  return it == replica_.end() ? nullptr : &it->second;
}

const DestEntry* TorSwitch::dest_entry(uint32_t vssd_id) const {
  auto it = dest_.find(vssd_id);
  return it == dest_.end() ? nullptr : &it->second;
}

Packet TorSwitch::traverse(Packet pkt, SimTime queue_delay, int traversals) const {
  SimTime d = cfg_.pipeline_latency * traversals + queue_delay;
  return add_hop_latency(pkt, lat_ticks_from_ns(d));
}

ForwardAction TorSwitch::make_forward(Packet pkt, uint32_t egress,
                                      SimTime queue_delay, int traversals) {
  ForwardAction a;
  a.pkt = traverse(std::move(pkt), queue_delay, traversals);
  a.egress_ip = egress;
  a.traversals = traversals;
  if (trace_sink) append_trace_record(*trace_sink, a.pkt);
  return a;
}

std::optional<Packet> TorSwitch::handle_gc_request(Packet pkt) {
  auto rit = replica_.find(pkt.vssd_id);
  if (rit == replica_.end()) {
    stats_.dropped_unknown_vssd++;
    return std::nullopt;
  }
  ReplicaEntry& re = rit->second;
  re.gc_status = 1;
  if (pkt.gc == GcCode::kSoft) {
    // second table access needs a recirculation
    stats_.recirculations++;
    if (dest_[re.replica_vssd_id].gc_status == 1) {
      pkt.gc = GcCode::kDelay;
      re.gc_status = 0;
      stats_.gc_delays++;
    } else {
      pkt.gc = GcCode::kAccept;
      dest_[pkt.vssd_id].gc_status = 1;
      stats_.gc_accepts++;
    }
  } else if (pkt.gc == GcCode::kFinish) {
    re.gc_status = 0;
    dest_[pkt.vssd_id].gc_status = 0;
    stats_.gc_finishes++;
  } else {
    // regular and bg requests are never denied
    dest_[pkt.vssd_id].gc_status = 1;
    pkt.gc = GcCode::kAccept;
    stats_.gc_accepts++;
  }
  pkt.dst = pkt.src;
  pkt.src = cfg_.switch_ip;
  return pkt;
}

std::vector<ForwardAction> TorSwitch::process_packet(Packet pkt,
                                                     SimTime queue_delay,
                                                     ReadDecision* decision) {
  std::vector<ForwardAction> out;
  switch (pkt.op) {
    case OpCode::kCreateVssd:
      out.push_back(make_forward(register_vssd(pkt), pkt.src, queue_delay, 1));
      break;
    case OpCode::kDelVssd:
      out.push_back(make_forward(deregister_vssd(pkt), pkt.src, queue_delay, 1));
      break;
    case OpCode::kWrite: {
      auto rit = replica_.find(pkt.vssd_id);
      if (rit == replica_.end()) {
        stats_.dropped_unknown_vssd++;
        break;
      }
      // fan out to the vssd's server and its in-rack replica's server; the
      // primary copy is forwarded unmodified
      uint32_t replica = rit->second.replica_vssd_id;
      out.push_back(make_forward(pkt, dest_[pkt.vssd_id].server_ip, queue_delay, 1));
      Packet copy = pkt;
      copy.vssd_id = replica;
      copy.dst = dest_[replica].server_ip;
      out.push_back(make_forward(copy, copy.dst, queue_delay, 1));
      stats_.write_fanouts++;
      break;
    }
    case OpCode::kRead: {
      auto rit = replica_.find(pkt.vssd_id);
      if (rit == replica_.end()) {
        stats_.dropped_unknown_vssd++;
        break;
      }
      uint32_t replica = rit->second.replica_vssd_id;
      ReadDecision d;
      d.primary_gc = rit->second.gc_status;
      d.replica_dst_gc = dest_[replica].gc_status;
      d.serving_vssd = pkt.vssd_id;
      if (rit->second.gc_status == 1 && dest_[replica].gc_status == 0) {
        pkt.dst = dest_[replica].server_ip;
        pkt.vssd_id = replica;
        d.redirected = true;
        d.serving_vssd = replica;
        stats_.redirected_reads++;
      }
      if (decision) *decision = d;
      out.push_back(make_forward(pkt, pkt.dst, queue_delay, 1));
      break;
    }
    case OpCode::kGcOp: {
      bool soft = pkt.gc == GcCode::kSoft;
      auto reply = handle_gc_request(std::move(pkt));
      if (reply)
        out.push_back(make_forward(*reply, reply->dst, queue_delay, soft ? 2 : 1));
      break;
    }
  }
  return out;
}

bool TorSwitch::tables_consistent() const {
  for (const auto& [id, re] : replica_) {
    auto it = dest_.find(id);
    if (it == dest_.end() || it->second.gc_status != re.gc_status) return false;
  }
  return replica_.size() == dest_.size();
}

nlohmann::ordered_json TorSwitch::dump_tables() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& [id, re] : replica_) {
    const DestEntry& de = dest_.at(id);
    arr.push_back({{"vssd_id", id},
                   {"gc_status", re.gc_status},
                   {"replica_id", re.replica_vssd_id},
                   {"server_ip", de.server_ip},
                   {"dst_gc_status", de.gc_status}});
  }
  return arr;
}

}  // namespace racksim
