#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "racksim/packet.hpp"
#include "racksim/sim_time.hpp"

#include "json.hpp"

namespace racksim {

struct ReplicaEntry {
  uint8_t gc_status = 0;  // 0 idle, 1 in GC
  uint32_t replica_vssd_id = 0;
};

struct DestEntry {
  uint32_t server_ip = 0;
  uint8_t gc_status = 0;
};

struct SwitchConfig {
  size_t capacity = 65536;
  SimTime pipeline_latency = 800;  // per traversal
  uint32_t switch_ip = 0x0a000001;
};

struct ForwardAction {
  Packet pkt;
  uint32_t egress_ip = 0;
  int traversals = 1;  // 2 when the packet was recirculated
};

struct SwitchStats {
  uint64_t dropped_unknown_vssd = 0;
  uint64_t redirected_reads = 0;
  uint64_t recirculations = 0;
  uint64_t write_fanouts = 0;
  uint64_t gc_accepts = 0;
  uint64_t gc_delays = 0;
  uint64_t gc_finishes = 0;
};

// Observed table bits at the moment a read was routed; feeds the
// redirection-safety audit.
struct ReadDecision {
  uint8_t primary_gc = 0;
  uint8_t replica_dst_gc = 0;
  bool redirected = false;
  uint32_t serving_vssd = 0;
};

// ToR-switch data plane: replica table + destination table and the packet
// processing workflow over them. One packet is processed atomically per
// event; a recirculated soft GC request pays a second pipeline traversal
// in latency.
class TorSwitch {
 public:
  explicit TorSwitch(const SwitchConfig& cfg) : cfg_(cfg) {}

  // CREATE_VSSD/DEL_VSSD return the ack packet; they throw on duplicate id,
  // capacity, or unknown id (configuration errors, not data-path ones).
  Packet register_vssd(const Packet& pkt);
  Packet deregister_vssd(const Packet& pkt);

  // Full workflow: returns the forwarded packets with INT latency applied
  // (pipeline x traversals + queue_delay). Unknown-vssd data packets are
  // dropped and counted; the returned list is then empty.
  std::vector<ForwardAction> process_packet(Packet pkt, SimTime queue_delay,
                                            ReadDecision* decision = nullptr);

  // GC accept/delay state machine alone (no latency applied).
  std::optional<Packet> handle_gc_request(Packet pkt);

  // INT accumulation for one switch visit.
  Packet traverse(Packet pkt, SimTime queue_delay, int traversals = 1) const;

  bool known(uint32_t vssd_id) const { return replica_.count(vssd_id) > 0; }

  // Wear-swap placement moves update the destination ip in place.
  void update_server_ip(uint32_t vssd_id, uint32_t ip) {
    auto it = dest_.find(vssd_id);
    if (it != dest_.end()) it->second.server_ip = ip;
  }
  const ReplicaEntry* replica_entry(uint32_t vssd_id) const;
  const DestEntry* dest_entry(uint32_t vssd_id) const;
  size_t entry_count() const { return replica_.size(); }
  size_t capacity() const { return cfg_.capacity; }
  uint32_t switch_ip() const { return cfg_.switch_ip; }

  // Tables must agree on the GC bit at quiescence.
  bool tables_consistent() const;

  // Memory model: key(4) + entry fields(5) + 11 bytes fixed overhead per
  // entry, per table.
  size_t memory_bytes_per_table() const { return replica_.size() * (4 + 5 + 11); }

  nlohmann::ordered_json dump_tables() const;

  const SwitchStats& stats() const { return stats_; }

  // Optional packet-trace hook: every egress packet appended as a
  // length-prefixed binary record.
  std::vector<uint8_t>* trace_sink = nullptr;

 private:
  ForwardAction make_forward(Packet pkt, uint32_t egress, SimTime queue_delay,
                             int traversals);

  SwitchConfig cfg_;
  std::map<uint32_t, ReplicaEntry> replica_;
  std::map<uint32_t, DestEntry> dest_;
  SwitchStats stats_;
};

}  // namespace racksim
