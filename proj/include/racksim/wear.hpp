#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "racksim/engine.hpp"
#include "racksim/flash.hpp"
#include "racksim/sim_time.hpp"

namespace racksim {

constexpr SimTime days(int64_t d) { return d * 24 * 3600 * kSec; }

struct WearConfig {
  double gamma = 0.1;                    // max permitted imbalance above 1
  SimTime local_period = days(12);
  SimTime global_period = days(7 * 8);   // 8 weeks
  bool local_enabled = true;
  bool global_enabled = true;
  double link_bytes_per_ns = 6.25;       // 50 Gb/s cross-server transfer
};

// lambda = phi_max / phi_avg; all-zero wear counts as perfectly balanced.
double imbalance(const std::vector<double>& phi);

struct SwapRecord {
  SimTime time = 0;
  int server_a = -1, ssd_a = -1;
  int server_b = -1, ssd_b = -1;
  bool cross_server = false;
  uint64_t bytes_moved = 0;
  uint64_t wear_added = 0;  // erases charged to the swap itself
  SimTime duration = 0;
};

// Pure selection rule: indexes of (argmax wear, argmin rate), ties to the
// lowest index. Returns false when the projected post-period imbalance stays
// within 1 + gamma or the two picks coincide.
bool select_swap_pair(const std::vector<double>& phi,
                      const std::vector<double>& rate, double gamma,
                      int* i_max_wear, int* i_min_rate);

// The event-mode wear leveler works through this host interface.
class SwapHost {
 public:
  virtual ~SwapHost() = default;
  virtual int server_count() const = 0;
  virtual ServerStorage& storage(int server) = 0;
  virtual void pause_ssd(int server, int ssd) = 0;
  virtual void resume_ssd(int server, int ssd) = 0;
  // placement moved across servers (switch tables need new server ip)
  virtual void relocated(uint32_t vssd_id, int new_server) = 0;
};

// Two-level wear leveling: a per-server balancer swapping SSD placements
// inside one server, and a rack balancer swapping across servers.
class WearLeveler {
 public:
  WearLeveler(Engine& eng, SwapHost& host, const WearConfig& cfg);

  void start();

  // One balancing pass (also invoked by the periodic events).
  void local_balance(int server);
  void global_balance();

  // Exchanges every vSSD between two SSD slots (possibly cross-server),
  // pausing their I/O for the duration. Returns the record.
  SwapRecord execute_swap(int server_a, int ssd_a, int server_b, int ssd_b);

  const std::vector<SwapRecord>& swaps() const { return swaps_; }

  struct WearSample {
    SimTime time;
    int server, ssd;
    double phi, rate, lambda_local, lambda_rack;
  };
  const std::vector<WearSample>& series() const { return series_; }
  void sample_now();

  std::function<bool()> draining;  // stops the periodic chains

 private:
  double phi(int server, int ssd) const;
  std::vector<double> server_phis(int server) const;
  double rack_lambda() const;

  Engine& eng_;
  SwapHost& host_;
  WearConfig cfg_;
  // previous-period phi per (server, ssd) for rates
  std::vector<std::vector<double>> prev_phi_;
  std::vector<double> prev_server_phi_;
  std::vector<SwapRecord> swaps_;
  std::vector<WearSample> series_;
};

// ---------------------------------------------------------------------------
// Accelerated (analytic) rack wear simulation for multi-year horizons.
// Per-vSSD wear follows the same trigger/restore staircase as the event-mode
// FTL under sequential overwrite (victims fully invalid, one erase per
// reclaimed block), so a day of simulated traffic matches the event engine's
// erase count to well under 0.1%.

struct WearSimVssd {
  double write_pages_per_sec = 0;
  double used_fraction = 0.55;  // logical fullness
  std::string workload;         // label only
};

struct WearSimConfig {
  int servers = 4;
  int ssds_per_server = 16;
  int vssds_per_ssd = 4;
  uint32_t blocks_per_ssd = 4096;
  int pages_per_block = 256;
  double initial_free = 0.45;
  double soft_threshold = 0.35;
  double restore_margin = 0.10;
  SimTime horizon = days(365);
  WearConfig wear;
  uint64_t seed = 1;
  // pages/sec of a 100%-write workload; per-vssd rate = base * write_ratio
  double base_write_pps = 400.0;
  std::vector<double> workload_write_ratios;  // assigned round-robin, shuffled by seed
  std::vector<std::string> workload_names;
};

struct WearSimResult {
  struct Boundary {
    SimTime time;
    std::vector<std::vector<double>> phi;  // [server][ssd]
    std::vector<double> lambda_local;      // per server
    double lambda_rack;
  };
  std::vector<Boundary> boundaries;  // one per local period
  std::vector<SwapRecord> swaps;
  double max_lambda_after_warmup = 0;   // over local boundaries, per server
  double max_rack_lambda_after_warmup = 0;
  uint64_t total_erases = 0;
  uint64_t swap_erases = 0;
};

WearSimResult run_wear_sim(const WearSimConfig& cfg);

// Closed-form erase staircase: erases of one vSSD after `t` seconds of
// writing at `pps` pages/sec, starting from `free0` free blocks, triggering
// at `soft` and reclaiming `batch` blocks per episode. Mirrors the event FTL
// under sequential overwrite.
uint64_t staircase_erases(double t_sec, double pps, int pages_per_block,
                          uint32_t total_blocks, double free0, double soft,
                          double restore_margin);

}  // namespace racksim
