#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "racksim/engine.hpp"
#include "racksim/rng.hpp"
#include "racksim/sim_time.hpp"

namespace racksim {

// YCSB-style zipfian rank generator (Gray's method). Rank 0 is the hottest.
class ZipfGenerator {
 public:
  ZipfGenerator(uint64_t n, double theta);
  uint64_t next(RngStream& rng);

  static double zeta(uint64_t n, double theta);
  double zetan() const { return zetan_; }

 private:
  uint64_t n_;
  double theta_, zetan_, alpha_, eta_;
};

struct WorkloadSpec {
  double write_ratio = 0.5;
  uint32_t request_size = 4096;
  uint64_t key_space = 100000;
  enum class Dist { kZipfian, kUniform, kSequential } dist = Dist::kZipfian;
  double theta = 0.99;
  enum class Pattern { kMixed, kPhased } pattern = Pattern::kMixed;
  uint64_t phase_len = 1000;  // requests per write burst + read burst cycle
  enum class Arrival { kOpenPoisson, kOpenPaced, kClosedLoop } arrival =
      Arrival::kOpenPoisson;
  double rate_rps = 20000.0;  // open loop, rack-wide
  int clients_per_vssd = 32;  // closed loop
  SimTime think_time = 0;
  int active_primaries = 0;  // 0 = address every primary

  void validate() const;
};

struct RequestSkeleton {
  bool is_write = false;
  uint64_t key = 0;
};

// Pure generator: (spec, rng state) -> request stream.
class WorkloadGen {
 public:
  explicit WorkloadGen(const WorkloadSpec& spec) : spec_(spec), zipf_(nullptr) {
    if (spec.dist == WorkloadSpec::Dist::kZipfian)
      zipf_ = std::make_unique<ZipfGenerator>(spec.key_space, spec.theta);
  }

  RequestSkeleton next(RngStream& rng);

 private:
  WorkloadSpec spec_;
  std::unique_ptr<ZipfGenerator> zipf_;
  uint64_t seq_key_ = 0;
  uint64_t phase_pos_ = 0;
};

struct CongestionEpisode {
  SimTime start = 0;
  SimTime duration = 0;
  SimTime extra = 0;  // added to every sample inside the window
};

struct NetProfile {
  std::string cls = "medium";  // fast | medium | slow | custom | trace
  double median_ns = 200000.0;
  double sigma = 0.69175;  // P99 ~ 5x median
  std::vector<CongestionEpisode> congestion;
  std::vector<SimTime> trace_in, trace_out;
  size_t cursor_in = 0, cursor_out = 0;

  static NetProfile by_class(const std::string& name);

  // Base draw (or next trace entry) plus any active congestion adders.
  SimTime sample(bool outbound, SimTime now, RngStream& rng);
};

enum class QueuePolicy { kNone, kTokenBucket, kFairQueue, kPriority };

QueuePolicy queue_policy_from_string(const std::string& s);
const char* to_string(QueuePolicy p);

struct SwitchQueueConfig {
  QueuePolicy policy = QueuePolicy::kNone;
  double tb_rate_pps = 50000.0;  // per flow
  int tb_burst = 16;
  SimTime service_time = 1000;  // egress serialization (fair-queue / priority)
};

// Egress queueing at the switch. Token bucket is per-flow rate limiting with
// no shared server; fair-queue (DRR) and strict priority share one egress
// server. `deliver` fires when the packet departs, carrying the queue delay.
class SwitchQueue {
 public:
  SwitchQueue(Engine& eng, const SwitchQueueConfig& cfg) : eng_(eng), cfg_(cfg) {}

  void enqueue(uint32_t flow, int prio_class,
               std::function<void(SimTime)> deliver);

  uint64_t served(uint32_t flow) const {
    auto it = served_.find(flow);
    return it == served_.end() ? 0 : it->second;
  }

 private:
  struct Item {
    uint32_t flow;
    SimTime arrival;
    std::function<void(SimTime)> deliver;
  };
  void serve_next();

  Engine& eng_;
  SwitchQueueConfig cfg_;
  // token bucket state per flow (GCRA theoretical arrival time)
  std::map<uint32_t, SimTime> tat_;
  // shared-server policies
  bool busy_ = false;
  std::map<int, std::deque<Item>> classes_;      // priority
  std::map<uint32_t, std::deque<Item>> flows_;   // fair queue
  uint32_t rr_last_ = 0;
  std::map<uint32_t, uint64_t> served_;
};

}  // namespace racksim
