#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "racksim/engine.hpp"
#include "racksim/flash.hpp"
#include "racksim/packet.hpp"

namespace racksim {

struct GcMonitorConfig {
  SimTime check_period = seconds(30);
  double soft_threshold = 0.35;
  double gc_threshold = 0.25;
  int retries = 3;
  SimTime bg_idle_threshold = msec(30);
  double alpha = 0.5;

  void validate() const {
    if (!(gc_threshold < soft_threshold))
      throw std::invalid_argument("gc_threshold must be < soft_threshold");
    if (alpha < 0.0 || alpha > 1.0)
      throw std::invalid_argument("alpha must be within [0,1]");
  }
};

// T_predict = alpha * T_real + (1 - alpha) * T_predict_prev, integer ns.
class IdlePredictor {
 public:
  explicit IdlePredictor(double alpha = 0.5) : alpha_(alpha) {}

  int64_t update(uint32_t vssd, SimTime gap) {
    int64_t prev = prediction(vssd);
    int64_t p = llround(alpha_ * double(gap) + (1.0 - alpha_) * double(prev));
    pred_[vssd] = p;
    return p;
  }

  // Records an arrival; feeds the gap since the previous one into the
  // recurrence.
  int64_t note_arrival(uint32_t vssd, SimTime now) {
    auto it = last_arrival_.find(vssd);
    int64_t p = prediction(vssd);
    if (it != last_arrival_.end()) p = update(vssd, now - it->second);
    last_arrival_[vssd] = now;
    return p;
  }

  int64_t prediction(uint32_t vssd) const {
    auto it = pred_.find(vssd);
    return it == pred_.end() ? 0 : it->second;
  }

  double alpha() const { return alpha_; }

 private:
  double alpha_;
  std::map<uint32_t, int64_t> pred_;
  std::map<uint32_t, SimTime> last_arrival_;
};

// Server-side half of coordinated GC: periodic threshold checks, soft/regular
// requests with retries, delayed-GC handling, background GC on predicted
// idleness, channel-group fan-out.
class GcCoordinator {
 public:
  GcCoordinator(Engine& eng, ServerStorage& storage, const GcMonitorConfig& cfg,
                uint32_t server_ip, uint32_t switch_ip);

  // Wired by the rack: emits a GC_OP packet toward the switch (or the
  // software controller). When unset, requests go nowhere — the retry path.
  std::function<void(const Packet&)> send;
  // Metrics hook: fires when an episode completes.
  std::function<void(const GcEpisode&)> on_episode;

  // false = uncoordinated threshold GC (vdc-like / coord-io-only): no
  // packets, GC runs locally once free ratio < gc_threshold.
  bool coordinated = true;

  // When set and true, periodic checks stop re-scheduling (run drain).
  std::function<bool()> draining;

  // Schedules jittered periodic checks for every current vssd.
  void start();
  void watch_vssd(uint32_t vssd_id);

  // Threshold logic of one periodic check; returns the request kind, if any.
  std::optional<GcCode> evaluate(uint32_t vssd_id) const;

  // One periodic check for one vssd (also re-scheduled automatically).
  void periodic_check(uint32_t vssd_id);

  void handle_reply(const Packet& reply);

  void note_arrival(uint32_t vssd_id, SimTime now) {
    idle_.note_arrival(vssd_id, now);
  }

  IdlePredictor& idle() { return idle_; }
  uint64_t delayed_count() const { return delayed_; }
  uint64_t forced_after_retries() const { return forced_; }
  uint64_t bg_started() const { return bg_started_; }

 private:
  struct Pending {
    GcCode kind;
    int retries_used = 0;
    bool awaiting = false;
  };
  struct GroupPending {
    GcCode kind;
    std::set<uint32_t> awaiting;
    std::vector<uint32_t> accepted;
    bool aborting = false;
    int retries_used = 0;
    SimTime sent_at = 0;
  };

  Packet make_gc_packet(uint32_t vssd_id, GcCode kind) const;
  void begin_gc(uint32_t vssd_id, GcCode kind);
  void group_check(uint32_t member_id);
  void send_group_request(int group_id, GcCode kind, int retries_used);

  Engine& eng_;
  ServerStorage& storage_;
  GcMonitorConfig cfg_;
  uint32_t server_ip_;
  uint32_t switch_ip_;
  IdlePredictor idle_;
  std::map<uint32_t, Pending> pending_;
  std::map<int, GroupPending> group_pending_;
  uint64_t delayed_ = 0;
  uint64_t forced_ = 0;
  uint64_t bg_started_ = 0;
};

}  // namespace racksim
