#pragma once

#include <cstdint>
#include <string>

#include "racksim/flash.hpp"
#include "racksim/gc_coord.hpp"
#include "racksim/io_sched.hpp"
#include "racksim/switch_plane.hpp"
#include "racksim/traffic.hpp"
#include "racksim/wear.hpp"

#include "json.hpp"

namespace racksim {

enum class SystemMode { kVdcLike, kSoftwareCoord, kSwitchCoord, kCoordIoOnly };

SystemMode mode_from_string(const std::string& s);
const char* to_string(SystemMode m);

struct TopologyConfig {
  int servers = 4;
  int ssds_per_server = 4;
  int vssds_per_ssd = 4;  // even: half primaries, half replica slots
  SsdGeometry geometry;
  int64_t vssd_capacity_bytes = 0;  // 0 = whole slice
};

struct PrefillConfig {
  double used_fraction = 0.55;
  double target_free = 0.42;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& w) : std::runtime_error(w) {}
};

struct RackConfig {
  int version = 1;
  uint64_t seed = 1;
  SimTime duration = seconds(60);
  SystemMode mode = SystemMode::kSwitchCoord;
  std::string label = "run";
  TopologyConfig topology;
  SchedulerPolicy scheduler;
  GcMonitorConfig gc;
  FlashConfig flash;  // geometry copied from topology at load
  WearConfig wear;
  WorkloadSpec workload;
  NetProfile net;
  SwitchQueueConfig switch_queue;
  SwitchConfig switch_cfg;
  PrefillConfig prefill;
  SimTime server_link_latency = usec(2);

  void validate() const;

  // Fields identifying the workload for report comparison.
  nlohmann::ordered_json identity() const;
};

nlohmann::ordered_json default_config_json();
RackConfig parse_config(const nlohmann::ordered_json& j);
RackConfig load_config_file(const std::string& path);
nlohmann::ordered_json load_config_json(const std::string& path);

// Sweep support: assigns `value` (parsed as JSON scalar when possible) at the
// dot path `axis`; the special axis "scheduler" accepts
// "fifo|deadline|kyber[+coord]".
void apply_axis(nlohmann::ordered_json& j, const std::string& axis,
                const std::string& value);

}  // namespace racksim
