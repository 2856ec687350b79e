#pragma once

#include <memory>
#include <set>
#include <unordered_map>
#include <vector>

#include "racksim/config.hpp"
#include "racksim/engine.hpp"
#include "racksim/flash.hpp"
#include "racksim/gc_coord.hpp"
#include "racksim/io_sched.hpp"
#include "racksim/metrics.hpp"
#include "racksim/packet.hpp"
#include "racksim/switch_plane.hpp"
#include "racksim/traffic.hpp"
#include "racksim/wear.hpp"

namespace racksim {

// One simulated rack: ToR switch, storage servers (flash + scheduler +
// GC coordinator + write cache), clients, and the wear leveler, all driven
// by one event engine.
class Rack : public SwapHost {
 public:
  Rack(Engine& eng, const RackConfig& cfg);
  ~Rack() override;

  void setup();  // build topology, register vssds, prefill
  void start();  // begin traffic and periodic machinery

  // Runs the configured duration, then drains in-flight work.
  void run_to_completion();

  // -- SwapHost ---------------------------------------------------------
  int server_count() const override { return int(servers_.size()); }
  ServerStorage& storage(int server) override { return *servers_[server]->storage; }
  void pause_ssd(int server, int ssd) override;
  void resume_ssd(int server, int ssd) override;
  void relocated(uint32_t vssd_id, int new_server) override;

  // -- introspection ------------------------------------------------------
  struct Mismatch {
    uint32_t primary, replica;
    uint32_t lpa;
  };
  // Quiescent replica-content comparison; empty result means consistent.
  std::vector<Mismatch> consistency_check() const;

  nlohmann::ordered_json build_report() const;
  std::string latency_hist_csv() const;
  std::string gc_log_csv() const;
  std::string wear_csv() const;

  TorSwitch& tor() { return *tor_; }
  WearLeveler& wear() { return *wear_; }
  GcCoordinator& coordinator(int server) { return *servers_[server]->gc; }
  const std::vector<uint32_t>& primaries() const { return primaries_; }
  uint32_t replica_of(uint32_t vssd) const { return pair_.at(vssd); }
  int server_of(uint32_t vssd) const { return placement_.at(vssd); }
  Engine& engine() { return eng_; }

  struct Counters {
    uint64_t generated = 0;
    uint64_t reads_done = 0, writes_done = 0;
    uint64_t reads_in_window = 0, writes_in_window = 0;
    uint64_t redirected = 0, sw_redirected = 0, gc_blocked_reads = 0;
    uint64_t cache_hits = 0, unmapped_reads = 0;
    uint64_t cache_absorbed = 0, stalled_writes = 0, gc_blocked_writes = 0;
    uint64_t additivity_violations = 0;
    uint64_t redirect_safety_violations = 0;
    uint64_t gc_packets_sent = 0;
    uint64_t controller_lookups = 0;
  };
  const Counters& counters() const { return counters_; }
  const LatencyHistogram& read_hist() const { return read_hist_; }
  const LatencyHistogram& write_hist() const { return write_hist_; }

  // Negative-control fault injection: drop the replica copy of the n-th
  // fanned-out write (0 = disabled).
  uint64_t drop_fanout_copy_at = 0;

 private:
  struct Ctx;
  struct Server;
  struct PendingReq {
    std::shared_ptr<Ctx> ctx;
    uint32_t serving_vssd = 0;
    int server = -1;
    SimTime arrival = 0;
    SimTime path = 0;
  };

  void schedule_open_arrival();
  void issue_closed(int primary_idx, int client);
  void generate(uint32_t target, int client_slot_primary, int client_slot_idx);
  void switch_ingress(std::shared_ptr<Ctx> ctx, Packet pkt, SimTime path);
  void on_switch_out(std::shared_ptr<Ctx> ctx, const ForwardAction& act,
                     SimTime path);
  void server_arrival(std::shared_ptr<Ctx> ctx, Packet pkt, SimTime path);
  void enqueue_at_server(Server& sv, std::shared_ptr<Ctx> ctx, const Packet& pkt,
                         SimTime net_time, SimTime path);
  void write_via_cache(Server& sv, std::shared_ptr<Ctx> ctx, const Packet& pkt,
                       SimTime path);
  void try_dispatch(int server);
  void finish_service(uint64_t pending_key, SimTime storage_latency);
  void send_reply(std::shared_ptr<Ctx> ctx, uint32_t vssd, SimTime path);
  void client_complete(std::shared_ptr<Ctx> ctx, SimTime path);
  void retry_stalled(int server);
  void wire_gc_transport(int server);
  void apply_content(uint32_t vssd, uint64_t lba, uint32_t len, uint64_t writer);
  bool draining() const { return draining_; }

  Engine& eng_;
  RackConfig cfg_;
  std::unique_ptr<TorSwitch> tor_;
  std::unique_ptr<TorSwitch> ctrl_;  // software-coordination controller tables
  std::unique_ptr<SwitchQueue> queue_;
  std::unique_ptr<WearLeveler> wear_;
  std::vector<std::unique_ptr<Server>> servers_;
  std::vector<uint32_t> primaries_;
  std::map<uint32_t, uint32_t> pair_;       // vssd -> partner
  std::map<uint32_t, int> placement_;       // vssd -> server
  std::map<uint32_t, std::vector<uint64_t>> content_;  // vssd -> lpa -> writer id
  std::unique_ptr<WorkloadGen> wl_;
  uint64_t next_ctx_id_ = 1;
  uint64_t next_pending_ = 1;
  std::unordered_map<uint64_t, PendingReq> pending_;
  Counters counters_;
  LatencyHistogram read_hist_, write_hist_;
  LatencyHistogram read_storage_hist_, write_storage_hist_;
  bool draining_ = false;
  uint64_t fanout_seq_ = 0;
  int active_primaries_ = 0;
  uint64_t keys_per_vssd_ = 0;
};

}  // namespace racksim
