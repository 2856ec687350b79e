#include "racksim/config.hpp"

#include <fstream>

namespace racksim {

using nlohmann::ordered_json;

SystemMode mode_from_string(const std::string& s) {
  if (s == "vdc-like") return SystemMode::kVdcLike;
  if (s == "software-coord") return SystemMode::kSoftwareCoord;
  if (s == "switch-coord") return SystemMode::kSwitchCoord;
  if (s == "coord-io-only") return SystemMode::kCoordIoOnly;
  throw ConfigError("unknown mode: " + s);
}

const char* to_string(SystemMode m) {
  switch (m) {
    case SystemMode::kVdcLike: return "vdc-like";
    case SystemMode::kSoftwareCoord: return "software-coord";
    case SystemMode::kSwitchCoord: return "switch-coord";
    case SystemMode::kCoordIoOnly: return "coord-io-only";
  }
  return "?";
}

ordered_json default_config_json() {
  return ordered_json{
      {"version", 1},
      {"seed", 1},
      {"duration_s", 60.0},
      {"mode", "switch-coord"},
      {"label", "run"},
      {"topology",
       {{"servers", 4},
        {"ssds_per_server", 4},
        {"vssds_per_ssd", 4},
        {"geometry",
         {{"channels", 4},
          {"chips_per_channel", 4},
          {"blocks_per_chip", 64},
          {"pages_per_block", 256},
          {"page_size", 4096}}},
        {"device_profile", "p-ssd"},
        {"vssd_capacity_mb", 0}}},
      {"scheduler", {{"variant", "kyber"}}},
      {"gc",
       {{"check_period_ms", 30000.0},
        {"soft_threshold", 0.35},
        {"gc_threshold", 0.25},
        {"retries", 3},
        {"bg_idle_threshold_ms", 30.0},
        {"alpha", 0.5}}},
      {"flash",
       {{"cache_mb", 64},
        {"cache_latency_us", 5.0},
        {"cache_flush_watermark", 0.8},
        {"gc_restore_margin", 0.10},
        {"borrow_group_mb", 1024}}},
      {"wear",
       {{"gamma", 0.1},
        {"local_period_days", 12.0},
        {"global_period_days", 56.0},
        {"local_enabled", true},
        {"global_enabled", true}}},
      {"workload",
       {{"write_ratio", 0.5},
        {"request_size", 4096},
        {"key_space", 100000},
        {"distribution", "zipfian"},
        {"theta", 0.99},
        {"pattern", "mixed"},
        {"phase_len", 1000},
        {"arrival", "open-poisson"},
        {"rate_rps", 24000.0},
        {"clients_per_vssd", 32},
        {"think_time_us", 0.0},
        {"active_primaries", 0}}},
      {"network",
       {{"class", "medium"}, {"congestion", ordered_json::array()}}},
      {"switch",
       {{"pipeline_ns", 800},
        {"capacity", 65536},
        {"tb_rate_pps", 50000.0},
        {"tb_burst", 16},
        {"service_time_us", 1.0}}},
      {"prefill", {{"used_fraction", 0.55}, {"target_free", 0.42}}},
  };
}

namespace {

template <typename T>
T get_or(const ordered_json& j, const std::string& key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

SimTime ns_from_s(double s) { return SimTime(s * 1e9 + 0.5); }
SimTime ns_from_ms(double v) { return SimTime(v * 1e6 + 0.5); }
SimTime ns_from_us(double v) { return SimTime(v * 1e3 + 0.5); }

}  // namespace

RackConfig parse_config(const ordered_json& in) {
  // overlay user values onto defaults so shipped configs stay terse
  ordered_json j = default_config_json();
  j.merge_patch(in);

  RackConfig c;
  c.version = j.at("version").get<int>();
  if (c.version != 1) throw ConfigError("unsupported config version");
  c.seed = j.at("seed").get<uint64_t>();
  c.duration = ns_from_s(j.at("duration_s").get<double>());
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.label = j.at("label").get<std::string>();

  const auto& t = j.at("topology");
  c.topology.servers = t.at("servers").get<int>();
  c.topology.ssds_per_server = t.at("ssds_per_server").get<int>();
  c.topology.vssds_per_ssd = t.at("vssds_per_ssd").get<int>();
  const auto& g = t.at("geometry");
  c.topology.geometry.channels = g.at("channels").get<int>();
  c.topology.geometry.chips_per_channel = g.at("chips_per_channel").get<int>();
  c.topology.geometry.blocks_per_chip = g.at("blocks_per_chip").get<int>();
  c.topology.geometry.pages_per_block = g.at("pages_per_block").get<int>();
  c.topology.geometry.page_size = g.at("page_size").get<int>();
  if (t.at("device_profile").is_string())
    c.topology.geometry.profile =
        DeviceProfile::by_name(t.at("device_profile").get<std::string>());
  else {
    const auto& p = t.at("device_profile");
    c.topology.geometry.profile.name = get_or<std::string>(p, "name", "custom");
    c.topology.geometry.profile.page_read = ns_from_us(p.at("read_us").get<double>());
    c.topology.geometry.profile.page_program =
        ns_from_us(p.at("program_us").get<double>());
    double e = p.at("erase_us").get<double>();
    c.topology.geometry.profile.block_erase = e <= 0 ? -1 : ns_from_us(e);
  }
  c.topology.vssd_capacity_bytes =
      int64_t(t.at("vssd_capacity_mb").get<double>() * 1024 * 1024);

  const auto& s = j.at("scheduler");
  SchedVariant var = sched_variant_from_string(s.at("variant").get<std::string>());
  bool coord_default = c.mode != SystemMode::kVdcLike;
  bool coordinated = get_or<bool>(s, "coordinated", coord_default);
  c.scheduler = SchedulerPolicy::configure(var, coordinated);
  if (s.contains("read_deadline_ms"))
    c.scheduler.read_deadline = ns_from_ms(s.at("read_deadline_ms").get<double>());
  if (s.contains("write_deadline_ms"))
    c.scheduler.write_deadline = ns_from_ms(s.at("write_deadline_ms").get<double>());
  if (s.contains("read_target_ms"))
    c.scheduler.read_target = ns_from_ms(s.at("read_target_ms").get<double>());
  if (s.contains("write_target_ms"))
    c.scheduler.write_target = ns_from_ms(s.at("write_target_ms").get<double>());

  const auto& gc = j.at("gc");
  c.gc.check_period = ns_from_ms(gc.at("check_period_ms").get<double>());
  c.gc.soft_threshold = gc.at("soft_threshold").get<double>();
  c.gc.gc_threshold = gc.at("gc_threshold").get<double>();
  c.gc.retries = gc.at("retries").get<int>();
  c.gc.bg_idle_threshold = ns_from_ms(gc.at("bg_idle_threshold_ms").get<double>());
  c.gc.alpha = gc.at("alpha").get<double>();

  const auto& f = j.at("flash");
  c.flash.geometry = c.topology.geometry;
  c.flash.ssds_per_server = c.topology.ssds_per_server;
  c.flash.cache_bytes_per_vssd =
      int64_t(f.at("cache_mb").get<double>() * 1024 * 1024);
  c.flash.cache_latency = ns_from_us(f.at("cache_latency_us").get<double>());
  c.flash.cache_flush_watermark = f.at("cache_flush_watermark").get<double>();
  c.flash.gc_restore_margin = f.at("gc_restore_margin").get<double>();
  c.flash.soft_threshold = c.gc.soft_threshold;
  c.flash.borrow_group_bytes =
      int64_t(f.at("borrow_group_mb").get<double>() * 1024 * 1024);

  const auto& w = j.at("wear");
  c.wear.gamma = w.at("gamma").get<double>();
  c.wear.local_period = SimTime(w.at("local_period_days").get<double>() * 86400e9);
  c.wear.global_period = SimTime(w.at("global_period_days").get<double>() * 86400e9);
  c.wear.local_enabled = w.at("local_enabled").get<bool>();
  c.wear.global_enabled = w.at("global_enabled").get<bool>();

  const auto& wl = j.at("workload");
  c.workload.write_ratio = wl.at("write_ratio").get<double>();
  c.workload.request_size = wl.at("request_size").get<uint32_t>();
  c.workload.key_space = wl.at("key_space").get<uint64_t>();
  std::string dist = wl.at("distribution").get<std::string>();
  if (dist == "zipfian") c.workload.dist = WorkloadSpec::Dist::kZipfian;
  else if (dist == "uniform") c.workload.dist = WorkloadSpec::Dist::kUniform;
  else if (dist == "sequential") c.workload.dist = WorkloadSpec::Dist::kSequential;
  else throw ConfigError("unknown distribution: " + dist);
  c.workload.theta = wl.at("theta").get<double>();
  std::string pat = wl.at("pattern").get<std::string>();
  if (pat == "mixed") c.workload.pattern = WorkloadSpec::Pattern::kMixed;
  else if (pat == "phased") c.workload.pattern = WorkloadSpec::Pattern::kPhased;
  else throw ConfigError("unknown pattern: " + pat);
  c.workload.phase_len = wl.at("phase_len").get<uint64_t>();
  std::string arr = wl.at("arrival").get<std::string>();
  if (arr == "open-poisson") c.workload.arrival = WorkloadSpec::Arrival::kOpenPoisson;
  else if (arr == "open-paced") c.workload.arrival = WorkloadSpec::Arrival::kOpenPaced;
  else if (arr == "closed-loop") c.workload.arrival = WorkloadSpec::Arrival::kClosedLoop;
  else throw ConfigError("unknown arrival model: " + arr);
  c.workload.rate_rps = wl.at("rate_rps").get<double>();
  c.workload.clients_per_vssd = wl.at("clients_per_vssd").get<int>();
  c.workload.think_time = ns_from_us(wl.at("think_time_us").get<double>());
  c.workload.active_primaries = wl.at("active_primaries").get<int>();

  const auto& n = j.at("network");
  std::string ncls = n.at("class").get<std::string>();
  c.net = NetProfile::by_class(ncls);
  if (n.contains("median_us")) c.net.median_ns = n.at("median_us").get<double>() * 1e3;
  if (n.contains("sigma")) c.net.sigma = n.at("sigma").get<double>();
  for (const auto& ep : n.at("congestion")) {
    CongestionEpisode e;
    e.start = ns_from_s(ep.at("start_s").get<double>());
    e.duration = ns_from_s(ep.at("duration_s").get<double>());
    e.extra = ns_from_us(ep.at("extra_us").get<double>());
    c.net.congestion.push_back(e);
  }
  if (n.contains("trace_file") && n.at("trace_file").is_string()) {
    std::ifstream tf(n.at("trace_file").get<std::string>());
    if (!tf) throw ConfigError("cannot open trace file");
    std::string line;
    while (std::getline(tf, line)) {
      if (line.empty() || line[0] == '#') continue;
      size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos)
        throw ConfigError("malformed trace line: " + line);
      std::string dir = line.substr(c1 + 1, c2 - c1 - 1);
      SimTime lat = SimTime(std::stoll(line.substr(c2 + 1)));
      if (dir == "in" || dir == "0") c.net.trace_in.push_back(lat);
      else if (dir == "out" || dir == "1") c.net.trace_out.push_back(lat);
      else throw ConfigError("trace direction must be in|out: " + line);
    }
  }

  const auto& sw = j.at("switch");
  c.switch_cfg.pipeline_latency = sw.at("pipeline_ns").get<int64_t>();
  c.switch_cfg.capacity = sw.at("capacity").get<size_t>();
  std::string qp = get_or<std::string>(
      sw, "queue_policy",
      (c.mode == SystemMode::kVdcLike || c.mode == SystemMode::kSoftwareCoord)
          ? "token-bucket"
          : "priority");
  c.switch_queue.policy = queue_policy_from_string(qp);
  c.switch_queue.tb_rate_pps = sw.at("tb_rate_pps").get<double>();
  c.switch_queue.tb_burst = sw.at("tb_burst").get<int>();
  c.switch_queue.service_time = ns_from_us(sw.at("service_time_us").get<double>());

  const auto& pf = j.at("prefill");
  c.prefill.used_fraction = pf.at("used_fraction").get<double>();
  c.prefill.target_free = pf.at("target_free").get<double>();

  c.validate();
  return c;
}

void RackConfig::validate() const {
  if (topology.servers < 2)
    throw ConfigError(
        "replica placement requires at least 2 servers (a vssd's replica "
        "must live on a different server)");
  if (topology.servers > 64) throw ConfigError("at most 64 servers per rack");
  if (topology.vssds_per_ssd < 2 || topology.vssds_per_ssd > 128)
    throw ConfigError("vssds_per_ssd must be in [2,128]");
  if (topology.vssds_per_ssd % 2 != 0)
    throw ConfigError("vssds_per_ssd must be even (primary + replica slots)");
  if (topology.ssds_per_server < 1 || topology.ssds_per_server > 16)
    throw ConfigError("ssds_per_server must be in [1,16]");
  topology.geometry.validate();
  if (topology.geometry.channels % (topology.vssds_per_ssd / 2) != 0 &&
      topology.vssds_per_ssd / 2 > topology.geometry.channels)
    throw ConfigError("vssd count does not divide the channel set");
  gc.validate();
  workload.validate();
  if (prefill.used_fraction < 0 || prefill.used_fraction > 1 ||
      prefill.target_free <= 0 || prefill.target_free > 1)
    throw ConfigError("prefill fractions out of range");
  if (wear.gamma <= 0) throw ConfigError("wear gamma must be > 0");
}

nlohmann::ordered_json RackConfig::identity() const {
  return {{"label", label},
          {"workload",
           {{"write_ratio", workload.write_ratio},
            {"request_size", workload.request_size},
            {"key_space", workload.key_space},
            {"rate_rps", workload.rate_rps}}},
          {"topology",
           {{"servers", topology.servers},
            {"ssds_per_server", topology.ssds_per_server},
            {"vssds_per_ssd", topology.vssds_per_ssd}}},
          {"device_profile", topology.geometry.profile.name},
          {"network_class", net.cls},
          {"duration_ns", duration}};
}

nlohmann::ordered_json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return j;
}

RackConfig load_config_file(const std::string& path) {
  return parse_config(load_config_json(path));
}

void apply_axis(ordered_json& j, const std::string& axis,
                const std::string& value) {
  if (axis == "scheduler") {
    std::string v = value;
    bool coord = false;
    auto pos = v.find("+coord");
    if (pos != std::string::npos) {
      coord = true;
      v = v.substr(0, pos);
    }
    j["scheduler"]["variant"] = v;
    j["scheduler"]["coordinated"] = coord;
    return;
  }
  // dot path into the json tree
  ordered_json* node = &j;
  std::string rest = axis;
  for (size_t dot = rest.find('.'); dot != std::string::npos;
       dot = rest.find('.')) {
    node = &(*node)[rest.substr(0, dot)];
    rest = rest.substr(dot + 1);
  }
  // parse the value as JSON when possible, else keep the string
  ordered_json parsed = ordered_json::parse(value, nullptr, false);
  if (parsed.is_discarded())
    (*node)[rest] = value;
  else
    (*node)[rest] = parsed;
}

}  // namespace racksim
