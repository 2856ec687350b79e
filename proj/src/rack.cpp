#include "racksim/rack.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace racksim {

namespace {
constexpr uint32_t kClientIp = 0x0a00f001;
constexpr uint32_t kCtrlIp = 0x0a00e001;

uint32_t server_ip_of(int idx) { return 0x0a000100u + uint32_t(idx); }

uint64_t spread(uint64_t key) { return key * 0x9e3779b97f4a7c15ULL; }
}  // namespace

struct Rack::Ctx {
  uint64_t id = 0;
  bool is_write = false;
  uint32_t target_vssd = 0;
  uint64_t lba = 0;
  uint32_t len = 0;
  SimTime gen_time = 0;
  int client_primary = -1;  // closed loop bookkeeping
  int client_idx = -1;
  int acks_needed = 1;
  // breadcrumbs
  uint8_t obs_primary_gc = 0, obs_replica_gc = 0;
  bool redirected = false, sw_redirected = false;
  bool from_cache = false, unmapped = false;
  bool gc_blocked = false, device_gc_at_dispatch = false;
  bool done = false;
};

struct Rack::Server {
  int index = 0;
  uint32_t ip = 0;
  std::unique_ptr<ServerStorage> storage;
  std::unique_ptr<IoScheduler> sched;
  std::unique_ptr<GcCoordinator> gc;
  ReturnPredictor predictor;
  std::set<uint32_t> paused;
  struct Stalled {
    std::shared_ptr<Ctx> ctx;
    Packet pkt;
    SimTime path;
    SimTime since;
  };
  std::vector<Stalled> stalled;
};

Rack::Rack(Engine& eng, const RackConfig& cfg) : eng_(eng), cfg_(cfg) {
  tor_ = std::make_unique<TorSwitch>(cfg.switch_cfg);
  if (cfg.mode == SystemMode::kSoftwareCoord) {
    SwitchConfig ctrl_cfg = cfg.switch_cfg;
    ctrl_cfg.pipeline_latency = 0;
    ctrl_cfg.switch_ip = kCtrlIp;
    ctrl_ = std::make_unique<TorSwitch>(ctrl_cfg);
  }
  queue_ = std::make_unique<SwitchQueue>(eng, cfg.switch_queue);
  wl_ = std::make_unique<WorkloadGen>(cfg.workload);
}

Rack::~Rack() = default;

void Rack::setup() {
  const TopologyConfig& t = cfg_.topology;
  const int S = t.servers, D = t.ssds_per_server, K = t.vssds_per_ssd;
  const SsdGeometry& g = t.geometry;

  for (int s = 0; s < S; s++) {
    auto sv = std::make_unique<Server>();
    sv->index = s;
    sv->ip = server_ip_of(s);
    sv->storage = std::make_unique<ServerStorage>(eng_, cfg_.flash);
    sv->sched = std::make_unique<IoScheduler>(cfg_.scheduler);
    sv->gc = std::make_unique<GcCoordinator>(eng_, *sv->storage, cfg_.gc, sv->ip,
                                             cfg_.switch_cfg.switch_ip);
    sv->gc->coordinated = cfg_.mode == SystemMode::kSwitchCoord ||
                          cfg_.mode == SystemMode::kSoftwareCoord;
    sv->gc->draining = [this] { return draining_; };
    servers_.push_back(std::move(sv));
  }

  // vssd id grid: cell (server, ssd, slot); slots [0, K/2) are primaries,
  // the upper half holds replicas of the previous server's primaries.
  auto cell_id = [&](int s, int d, int k) {
    return uint32_t((s * D + d) * K + k) + 1;
  };
  int64_t slice_bytes =
      int64_t(g.channels) * g.chips_per_channel / K * g.blocks_per_chip *
      g.block_bytes() * 1;  // per-vssd share of one ssd
  int64_t cap = t.vssd_capacity_bytes > 0 ? t.vssd_capacity_bytes
                                          : slice_bytes * 3 / 4;

  bool hw = g.channels % K == 0 && g.channels >= K;
  for (int s = 0; s < S; s++) {
    Server& sv = *servers_[s];
    for (int d = 0; d < D; d++) {
      std::vector<uint32_t> group_members;
      for (int k = 0; k < K; k++) {
        uint32_t id = cell_id(s, d, k);
        std::vector<int> units;
        if (hw) {
          int per = g.channels / K;
          for (int c = 0; c < per; c++) units.push_back(k * per + c);
          sv.storage->create_vssd(id, d, Isolation::kHardware, units, cap);
        } else {
          int total_chips = g.channels * g.chips_per_channel;
          int per = total_chips / K;
          // stripe chips across channels so group members span the same set
          for (int c = 0; c < per; c++) units.push_back(k + c * K);
          sv.storage->create_vssd(id, d, Isolation::kSoftware, units, cap);
          group_members.push_back(id);
        }
        placement_[id] = s;
      }
      if (!group_members.empty()) sv.storage->make_channel_group(d, group_members);
    }
  }

  // pairing + switch registration
  for (int s = 0; s < S; s++) {
    for (int d = 0; d < D; d++) {
      for (int k = 0; k < K / 2; k++) {
        uint32_t p = cell_id(s, d, k);
        uint32_t r = cell_id((s + 1) % S, d, k + K / 2);
        pair_[p] = r;
        pair_[r] = p;
        primaries_.push_back(p);
      }
    }
  }
  std::sort(primaries_.begin(), primaries_.end());
  for (const auto& [v, partner] : pair_) {
    Packet reg;
    reg.op = OpCode::kCreateVssd;
    reg.vssd_id = v;
    reg.src = server_ip_of(placement_[v]);
    reg.dst = cfg_.switch_cfg.switch_ip;
    reg.server_ip = server_ip_of(placement_[v]);
    reg.replica_vssd_id = partner;
    reg.replica_server_ip = server_ip_of(placement_[partner]);
    tor_->register_vssd(reg);
    if (ctrl_) ctrl_->register_vssd(reg);
  }

  // prefill both members of a pair with identical logical streams
  for (uint32_t p : primaries_) {
    uint32_t r = pair_[p];
    uint64_t pair_seed = cfg_.seed * 0x100000001b3ULL + p;
    for (uint32_t member : {p, r}) {
      Server& sv = *servers_[placement_[member]];
      RngStream st(pair_seed);
      sv.storage->prefill(member, cfg_.prefill.used_fraction,
                          cfg_.prefill.target_free, st);
    }
    // replay the same draws into the logical content map
    auto& cp = content_[p];
    auto& cr = content_[r];
    const Vssd& vp = servers_[placement_[p]]->storage->vssd(p);
    cp.assign(vp.capacity_pages, 0);
    cr.assign(vp.capacity_pages, 0);
    uint32_t used = uint32_t(cfg_.prefill.used_fraction * vp.capacity_pages);
    for (uint32_t lpa = 0; lpa < used; lpa++) cp[lpa] = cr[lpa] = 1;
  }

  // wiring: channel readiness -> dispatch, gc begin -> write diversion,
  // space freed -> stalled retries, gc transport by mode
  for (int s = 0; s < S; s++) {
    Server& sv = *servers_[s];
    for (int d = 0; d < D; d++) {
      Ssd& dev = sv.storage->ssd(d);
      for (auto& ch : dev.chans)
        ch.on_host_ready = [this, s] { try_dispatch(s); };
    }
    sv.storage->on_space_available = [this, s] { retry_stalled(s); };
    sv.storage->on_gc_begin = [this, s](uint32_t vssd_id) {
      Server& sv = *servers_[s];
      for (auto& qr : sv.sched->divert_writes(vssd_id)) {
        auto it = pending_.find(qr.ctx);
        if (it == pending_.end()) continue;
        PendingReq pr = it->second;
        pending_.erase(it);
        Packet pkt;
        pkt.op = OpCode::kWrite;
        pkt.vssd_id = vssd_id;
        pkt.lba = pr.ctx->lba;
        pkt.len = pr.ctx->len;
        write_via_cache(sv, pr.ctx, pkt, pr.path + (eng_.now() - pr.arrival));
      }
    };
    wire_gc_transport(s);
  }

  wear_ = std::make_unique<WearLeveler>(eng_, *this, cfg_.wear);
  wear_->draining = [this] { return draining_; };

  active_primaries_ = cfg_.workload.active_primaries > 0
                          ? std::min<int>(cfg_.workload.active_primaries,
                                          int(primaries_.size()))
                          : int(primaries_.size());
  const Vssd& v0 = servers_[placement_[primaries_[0]]]->storage->vssd(primaries_[0]);
  keys_per_vssd_ = std::max<uint64_t>(
      1, std::min<uint64_t>(cfg_.workload.key_space,
                            uint64_t(v0.capacity_bytes / cfg_.workload.request_size)));
}

void Rack::wire_gc_transport(int server) {
  Server& sv = *servers_[server];
  if (cfg_.mode == SystemMode::kSwitchCoord) {
    sv.gc->send = [this](const Packet& pkt) {
      counters_.gc_packets_sent++;
      Packet p = pkt;
      eng_.schedule(cfg_.server_link_latency, EventKind::kPacketArrival,
                    [this, p]() mutable {
                      // control traffic: no data-plane queueing
                      auto actions = tor_->process_packet(p, 0);
                      for (const auto& act : actions) {
                        SimTime d = cfg_.switch_cfg.pipeline_latency * act.traversals +
                                    cfg_.server_link_latency;
                        Packet out = act.pkt;
                        eng_.schedule(d, EventKind::kPacketArrival, [this, out] {
                          for (auto& s : servers_)
                            if (s->ip == out.dst) s->gc->handle_reply(out);
                        });
                      }
                    });
    };
  } else if (cfg_.mode == SystemMode::kSoftwareCoord) {
    // the controller lives on a separate server:每 decision costs a network
    // round trip through the rack
    sv.gc->send = [this](const Packet& pkt) {
      counters_.gc_packets_sent++;
      Packet p = pkt;
      RngStream& net = eng_.rng().register_stream("network");
      SimTime to_ctrl = cfg_.net.sample(false, eng_.now(), net) +
                        cfg_.switch_cfg.pipeline_latency + cfg_.server_link_latency;
      eng_.schedule(to_ctrl, EventKind::kPacketArrival, [this, p]() mutable {
        auto actions = ctrl_->process_packet(p, 0);
        RngStream& net2 = eng_.rng().register_stream("network");
        for (const auto& act : actions) {
          SimTime back = cfg_.net.sample(true, eng_.now(), net2) +
                         cfg_.switch_cfg.pipeline_latency + cfg_.server_link_latency;
          Packet out = act.pkt;
          eng_.schedule(back, EventKind::kPacketArrival, [this, out] {
            for (auto& s : servers_)
              if (s->ip == out.dst) s->gc->handle_reply(out);
          });
        }
      });
    };
  }
  // vdc-like / coord-io-only: uncoordinated, no transport
}

void Rack::start() {
  for (auto& sv : servers_) sv->gc->start();
  wear_->start();
  switch (cfg_.workload.arrival) {
    case WorkloadSpec::Arrival::kOpenPoisson:
    case WorkloadSpec::Arrival::kOpenPaced:
      schedule_open_arrival();
      break;
    case WorkloadSpec::Arrival::kClosedLoop:
      for (int p = 0; p < active_primaries_; p++)
        for (int c = 0; c < cfg_.workload.clients_per_vssd; c++)
          issue_closed(p, c);
      break;
  }
}

void Rack::schedule_open_arrival() {
  if (draining_) return;
  RngStream& arr = eng_.rng().register_stream("arrival");
  SimTime gap;
  if (cfg_.workload.arrival == WorkloadSpec::Arrival::kOpenPoisson)
    gap = SimTime(arr.next_exponential(1e9 / cfg_.workload.rate_rps));
  else
    gap = SimTime(1e9 / cfg_.workload.rate_rps);
  eng_.schedule(gap, EventKind::kClientTick, [this] {
    if (eng_.now() >= cfg_.duration || draining_) return;
    RngStream& wls = eng_.rng().register_stream("workload");
    RequestSkeleton sk = wl_->next(wls);
    uint32_t target = primaries_[spread(sk.key) % uint64_t(active_primaries_)];
    generate(target, -1, -1);
    schedule_open_arrival();
  });
}

void Rack::issue_closed(int primary_idx, int client) {
  if (draining_ || eng_.now() >= cfg_.duration) return;
  RngStream& wls = eng_.rng().register_stream("workload");
  RequestSkeleton sk = wl_->next(wls);
  uint32_t target = primaries_[size_t(primary_idx)];
  generate(target, primary_idx, client);
}

void Rack::generate(uint32_t target, int client_primary, int client_idx) {
  RngStream& wls = eng_.rng().register_stream("workload");
  RequestSkeleton sk = wl_->next(wls);  // direction + key
  auto ctx = std::make_shared<Ctx>();
  ctx->id = next_ctx_id_++;
  ctx->is_write = sk.is_write;
  ctx->target_vssd = target;
  ctx->lba = (sk.key % keys_per_vssd_) * cfg_.workload.request_size;
  ctx->len = cfg_.workload.request_size;
  ctx->gen_time = eng_.now();
  ctx->client_primary = client_primary;
  ctx->client_idx = client_idx;
  ctx->acks_needed = sk.is_write ? 2 : 1;
  counters_.generated++;

  Packet pkt;
  pkt.op = sk.is_write ? OpCode::kWrite : OpCode::kRead;
  pkt.vssd_id = target;
  pkt.lba = ctx->lba;
  pkt.len = ctx->len;
  pkt.src = kClientIp;
  pkt.dst = server_ip_of(placement_[target]);

  RngStream& net = eng_.rng().register_stream("network");
  SimTime inbound = cfg_.net.sample(false, eng_.now(), net);
  pkt.lat = lat_ticks_from_ns(inbound);
  eng_.schedule(inbound, EventKind::kPacketArrival,
                [this, ctx, pkt, inbound] { switch_ingress(ctx, pkt, inbound); });
}

void Rack::switch_ingress(std::shared_ptr<Ctx> ctx, Packet pkt, SimTime path) {
  queue_->enqueue(pkt.vssd_id, 1, [this, ctx, pkt, path](SimTime qd) {
    ReadDecision dec;
    auto actions = tor_->process_packet(pkt, qd, &dec);
    if (pkt.op == OpCode::kRead) {
      ctx->obs_primary_gc = dec.primary_gc;
      ctx->obs_replica_gc = dec.replica_dst_gc;
      ctx->redirected = dec.redirected;
      if (dec.redirected) counters_.redirected++;
    }
    if (pkt.op == OpCode::kWrite && drop_fanout_copy_at > 0) {
      fanout_seq_++;
      if (fanout_seq_ == drop_fanout_copy_at && actions.size() == 2) {
        actions.pop_back();  // negative control: lose the replica copy
        ctx->acks_needed = 1;
      }
    }
    for (const auto& act : actions) on_switch_out(ctx, act, path + qd);
  });
}

void Rack::on_switch_out(std::shared_ptr<Ctx> ctx, const ForwardAction& act,
                         SimTime path) {
  SimTime d = cfg_.switch_cfg.pipeline_latency * act.traversals +
              cfg_.server_link_latency;
  Packet pkt = act.pkt;
  eng_.schedule(d, EventKind::kPacketArrival,
                [this, ctx, pkt, path, d] { server_arrival(ctx, pkt, path + d); });
}

void Rack::server_arrival(std::shared_ptr<Ctx> ctx, Packet pkt, SimTime path) {
  Server* sv = nullptr;
  for (auto& s : servers_)
    if (s->ip == pkt.dst) sv = s.get();
  if (!sv) return;

  SimTime net_time = ns_from_lat_ticks(pkt.lat);
  double predict = sv->predictor.update(pkt.vssd_id, pkt.op == OpCode::kWrite,
                                        net_time);
  sv->gc->note_arrival(pkt.vssd_id, eng_.now());

  // software coordination: the server consults the controller before
  // redirecting a read away from a vssd that is collecting
  if (cfg_.mode == SystemMode::kSoftwareCoord && pkt.op == OpCode::kRead &&
      !ctx->sw_redirected) {
    const Vssd& v = sv->storage->vssd(pkt.vssd_id);
    if (v.gc_active) {
      counters_.controller_lookups++;
      RngStream& net = eng_.rng().register_stream("network");
      SimTime rtt = cfg_.net.sample(false, eng_.now(), net) +
                    cfg_.net.sample(true, eng_.now(), net);
      ReadDecision dec;
      auto actions = ctrl_->process_packet(pkt, 0, &dec);
      ctx->obs_primary_gc = dec.primary_gc;
      ctx->obs_replica_gc = dec.replica_dst_gc;
      if (dec.redirected && !actions.empty()) {
        ctx->sw_redirected = true;
        counters_.sw_redirected++;
        Packet fwd = actions[0].pkt;
        SimTime leg = cfg_.net.sample(false, eng_.now(), net) +
                      cfg_.switch_cfg.pipeline_latency + cfg_.server_link_latency;
        eng_.schedule(rtt + leg, EventKind::kPacketArrival,
                      [this, ctx, fwd, path, rtt, leg] {
                        server_arrival(ctx, fwd, path + rtt + leg);
                      });
        return;
      }
      // both replicas collecting: serve locally after the lookup
      path += rtt;
      SimTime hold = rtt;
      Packet held = pkt;
      eng_.schedule(hold, EventKind::kPacketArrival,
                    [this, sv, ctx, held, net_time, path] {
                      enqueue_at_server(*sv, ctx, held, net_time, path);
                    });
      return;
    }
  }

  if (pkt.op == OpCode::kWrite) {
    const Vssd& v = sv->storage->vssd(pkt.vssd_id);
    if (v.gc_active && !sv->storage->ssd(v.ssd_index).geom.profile.gc_free()) {
      write_via_cache(*sv, ctx, pkt, path);
      return;
    }
  }
  enqueue_at_server(*sv, ctx, pkt, net_time, path);
  (void)predict;
}

void Rack::enqueue_at_server(Server& sv, std::shared_ptr<Ctx> ctx,
                             const Packet& pkt, SimTime net_time, SimTime path) {
  uint64_t key = next_pending_++;
  PendingReq pr;
  pr.ctx = ctx;
  pr.serving_vssd = pkt.vssd_id;
  pr.server = sv.index;
  pr.arrival = eng_.now();
  pr.path = path;
  pending_[key] = pr;

  QueuedRequest qr;
  qr.ctx = key;
  qr.vssd_id = pkt.vssd_id;
  qr.is_write = pkt.op == OpCode::kWrite;
  qr.net_time = net_time;
  qr.enqueue_time = eng_.now();
  qr.predict_time = sv.predictor.predict(pkt.vssd_id, qr.is_write);
  sv.sched->enqueue(qr);
  try_dispatch(sv.index);
}

void Rack::write_via_cache(Server& sv, std::shared_ptr<Ctx> ctx, const Packet& pkt,
                           SimTime path) {
  auto res = sv.storage->begin_write(pkt.vssd_id, pkt.lba, pkt.len);
  if (res.cached) {
    counters_.cache_absorbed++;
    apply_content(pkt.vssd_id, pkt.lba, pkt.len, ctx->id);
    SimTime d = cfg_.flash.cache_latency;
    uint32_t vssd = pkt.vssd_id;
    eng_.schedule(d, EventKind::kRequestComplete, [this, ctx, vssd, path, d] {
      send_reply(ctx, vssd, path + d);
    });
    return;
  }
  // cache full: the write blocks until flush frees space
  counters_.stalled_writes++;
  sv.stalled.push_back(Server::Stalled{ctx, pkt, path, eng_.now()});
}

void Rack::retry_stalled(int server) {
  Server& sv = *servers_[server];
  if (sv.stalled.empty()) return;
  std::vector<Server::Stalled> still;
  for (auto& st : sv.stalled) {
    const Vssd& v = sv.storage->vssd(st.pkt.vssd_id);
    SimTime waited = eng_.now() - st.since;
    if (v.gc_active) {
      auto res = sv.storage->begin_write(st.pkt.vssd_id, st.pkt.lba, st.pkt.len);
      if (res.cached) {
        counters_.cache_absorbed++;
        apply_content(st.pkt.vssd_id, st.pkt.lba, st.pkt.len, st.ctx->id);
        SimTime d = cfg_.flash.cache_latency;
        auto ctx = st.ctx;
        uint32_t vssd = st.pkt.vssd_id;
        SimTime path = st.path + waited + d;
        eng_.schedule(d, EventKind::kRequestComplete,
                      [this, ctx, vssd, path] { send_reply(ctx, vssd, path); });
        continue;
      }
      still.push_back(st);
      continue;
    }
    // GC over: take the normal queued path
    enqueue_at_server(sv, st.ctx, st.pkt, ns_from_lat_ticks(st.pkt.lat),
                      st.path + waited);
  }
  sv.stalled = std::move(still);
}

void Rack::try_dispatch(int server) {
  Server& sv = *servers_[server];
  auto can_serve = [this, &sv](const QueuedRequest& qr) -> bool {
    auto it = pending_.find(qr.ctx);
    if (it == pending_.end()) return false;
    if (sv.paused.count(qr.vssd_id)) return false;
    if (!sv.storage->has_vssd(qr.vssd_id)) return false;
    if (qr.is_write) {
      const Vssd& v = sv.storage->vssd(qr.vssd_id);
      if (v.gc_active) return false;  // diversion in flight
      return sv.storage->writable_slot(qr.vssd_id,
                                       qr.net_time >= 0 ? 1 : 1) >= 0 ||
             sv.storage->ssd(v.ssd_index).geom.profile.gc_free()
                 ? sv.storage->writable_slot(qr.vssd_id, 1) >= 0
                 : false;
    }
    auto plan = sv.storage->plan_read(qr.vssd_id, pending_[qr.ctx].ctx->lba,
                                      pending_[qr.ctx].ctx->len);
    if (plan.from_cache || plan.unmapped) return true;
    return sv.storage->ssd(sv.storage->vssd(qr.vssd_id).ssd_index)
        .chans[plan.target_channel]
        .accepts_host();
  };

  while (true) {
    auto qr = sv.sched->dispatch(eng_.now(), can_serve);
    if (!qr) break;
    auto it = pending_.find(qr->ctx);
    if (it == pending_.end()) continue;
    PendingReq pr = it->second;
    pending_.erase(it);
    uint64_t pending_key = qr->ctx;
    Vssd& v = sv.storage->vssd(qr->vssd_id);
    SimTime waited = eng_.now() - pr.arrival;
    pr.path += waited;
    pr.ctx->device_gc_at_dispatch = v.gc_active;
    if (!qr->is_write && (v.gc_active || v.last_gc_end > pr.arrival)) {
      pr.ctx->gc_blocked = true;
    }
    pending_[pending_key] = pr;  // re-stash with updated path

    if (!qr->is_write) {
      auto plan = sv.storage->plan_read(qr->vssd_id, pr.ctx->lba, pr.ctx->len);
      pr.ctx->from_cache = plan.from_cache;
      pr.ctx->unmapped = plan.unmapped;
      pending_[pending_key].path += plan.service;
      if (plan.from_cache || plan.unmapped) {
        eng_.schedule(plan.service, EventKind::kOpComplete,
                      [this, pending_key, plan, waited] {
                        finish_service(pending_key, waited + plan.service);
                      });
      } else {
        Ssd& dev = sv.storage->ssd(v.ssd_index);
        dev.chans[plan.target_channel].start_host_op(
            eng_, plan.service, [this, pending_key, plan, waited] {
              finish_service(pending_key, waited + plan.service);
            });
      }
    } else {
      int slot = sv.storage->writable_slot(qr->vssd_id, 1);
      auto res = sv.storage->begin_write(qr->vssd_id, pr.ctx->lba, pr.ctx->len);
      (void)slot;
      if (res.cached) {
        // raced into GC between can_serve and dispatch
        counters_.cache_absorbed++;
        apply_content(qr->vssd_id, pr.ctx->lba, pr.ctx->len, pr.ctx->id);
        SimTime d = cfg_.flash.cache_latency;
        pending_[pending_key].path += d;
        eng_.schedule(d, EventKind::kOpComplete, [this, pending_key, waited, d] {
          finish_service(pending_key, waited + d);
        });
      } else if (res.stalled) {
        PendingReq st = pending_[pending_key];
        pending_.erase(pending_key);
        Packet pkt;
        pkt.op = OpCode::kWrite;
        pkt.vssd_id = qr->vssd_id;
        pkt.lba = st.ctx->lba;
        pkt.len = st.ctx->len;
        counters_.stalled_writes++;
        sv.stalled.push_back(Server::Stalled{st.ctx, pkt, st.path, eng_.now()});
        sv.sched->complete(true, 0);
      } else {
        uint64_t writer = pr.ctx->id;
        uint32_t vid = qr->vssd_id;
        pending_[pending_key].path += res.service;
        Ssd& dev = sv.storage->ssd(v.ssd_index);
        dev.chans[res.target_channel].start_host_op(
            eng_, res.service,
            [this, pending_key, res, waited, writer, vid] {
              auto it = pending_.find(pending_key);
              if (it != pending_.end())
                apply_content(vid, it->second.ctx->lba, it->second.ctx->len, writer);
              finish_service(pending_key, waited + res.service);
            });
      }
    }
  }
}

void Rack::finish_service(uint64_t pending_key, SimTime storage_latency) {
  auto it = pending_.find(pending_key);
  if (it == pending_.end()) return;
  PendingReq pr = it->second;
  pending_.erase(it);
  Server& sv = *servers_[pr.server];
  sv.sched->complete(pr.ctx->is_write, storage_latency);
  (pr.ctx->is_write ? write_storage_hist_ : read_storage_hist_).add(storage_latency);
  send_reply(pr.ctx, pr.serving_vssd, pr.path);
  try_dispatch(pr.server);
}

void Rack::send_reply(std::shared_ptr<Ctx> ctx, uint32_t vssd, SimTime path) {
  RngStream& net = eng_.rng().register_stream("network");
  SimTime out = cfg_.net.sample(true, eng_.now(), net) +
                cfg_.switch_cfg.pipeline_latency + cfg_.server_link_latency;
  (void)vssd;
  eng_.schedule(out, EventKind::kRequestComplete,
                [this, ctx, path, out] { client_complete(ctx, path + out); });
}

void Rack::client_complete(std::shared_ptr<Ctx> ctx, SimTime path) {
  ctx->acks_needed--;
  if (ctx->acks_needed > 0) return;
  if (ctx->done) return;
  ctx->done = true;
  SimTime e2e = eng_.now() - ctx->gen_time;
  // the completing ack's path must reconstruct the end-to-end latency exactly
  if (path != e2e && !ctx->is_write) counters_.additivity_violations++;
  if (ctx->is_write && path > e2e) counters_.additivity_violations++;

  if (ctx->is_write) {
    counters_.writes_done++;
    if (eng_.now() <= cfg_.duration) counters_.writes_in_window++;
    write_hist_.add(e2e);
    if (ctx->gc_blocked) counters_.gc_blocked_writes++;
  } else {
    counters_.reads_done++;
    if (eng_.now() <= cfg_.duration) counters_.reads_in_window++;
    read_hist_.add(e2e);
    if (ctx->from_cache) counters_.cache_hits++;
    if (ctx->unmapped) counters_.unmapped_reads++;
    if (ctx->gc_blocked && !ctx->redirected && !ctx->sw_redirected)
      counters_.gc_blocked_reads++;
    // redirection safety audit
    if (ctx->device_gc_at_dispatch) {
      bool switch_saw_alternative_idle =
          (!ctx->redirected && ctx->obs_primary_gc == 1 && ctx->obs_replica_gc == 0);
      bool rewrote_toward_gc = ctx->redirected && ctx->obs_replica_gc == 1;
      if (switch_saw_alternative_idle || rewrote_toward_gc)
        counters_.redirect_safety_violations++;
    }
  }

  if (ctx->client_primary >= 0 && !draining_ && eng_.now() < cfg_.duration) {
    int p = ctx->client_primary, c = ctx->client_idx;
    if (cfg_.workload.think_time > 0)
      eng_.schedule(cfg_.workload.think_time, EventKind::kClientTick,
                    [this, p, c] { issue_closed(p, c); });
    else
      issue_closed(p, c);
  }
}

void Rack::apply_content(uint32_t vssd, uint64_t lba, uint32_t len,
                         uint64_t writer) {
  auto it = content_.find(vssd);
  if (it == content_.end()) return;
  uint32_t ps = uint32_t(cfg_.topology.geometry.page_size);
  uint32_t first = uint32_t(lba / ps);
  uint32_t pages = (uint32_t(lba % ps) + len + ps - 1) / ps;
  for (uint32_t i = 0; i < pages && first + i < it->second.size(); i++) {
    // last-writer-wins by generation id keeps racing fan-out copies convergent
    if (writer > it->second[first + i]) it->second[first + i] = writer;
  }
}

void Rack::run_to_completion() {
  start();
  eng_.run_until(cfg_.duration);
  draining_ = true;
  eng_.run_to_quiescence();
}

// ---------------------------------------------------------------- SwapHost --

void Rack::pause_ssd(int server, int ssd) {
  Server& sv = *servers_[server];
  for (uint32_t id : sv.storage->vssds_on_ssd(ssd)) sv.paused.insert(id);
}

void Rack::resume_ssd(int server, int ssd) {
  Server& sv = *servers_[server];
  for (uint32_t id : sv.storage->vssds_on_ssd(ssd)) sv.paused.erase(id);
  try_dispatch(server);
}

void Rack::relocated(uint32_t vssd_id, int new_server) {
  int old_server = placement_[vssd_id];
  placement_[vssd_id] = new_server;
  tor_->update_server_ip(vssd_id, server_ip_of(new_server));
  if (ctrl_) ctrl_->update_server_ip(vssd_id, server_ip_of(new_server));
  // queued work follows the placement
  Server& old_sv = *servers_[old_server];
  Server& new_sv = *servers_[new_server];
  for (auto& qr : old_sv.sched->extract_vssd(vssd_id)) {
    auto it = pending_.find(qr.ctx);
    if (it != pending_.end()) it->second.server = new_server;
    new_sv.sched->enqueue(qr);
  }
  old_sv.paused.erase(vssd_id);
  try_dispatch(new_server);
}

// ------------------------------------------------------------- consistency --

std::vector<Rack::Mismatch> Rack::consistency_check() const {
  std::vector<Mismatch> out;
  for (uint32_t p : primaries_) {
    uint32_t r = pair_.at(p);
    const auto& cp = content_.at(p);
    const auto& cr = content_.at(r);
    for (uint32_t lpa = 0; lpa < cp.size(); lpa++) {
      if (cp[lpa] != cr[lpa]) out.push_back(Mismatch{p, r, lpa});
    }
  }
  return out;
}

// ----------------------------------------------------------------- reports --

nlohmann::ordered_json Rack::build_report() const {
  double dur_s = double(cfg_.duration) / 1e9;
  uint64_t gc_episodes = 0, soft = 0, regular = 0, bg = 0;
  SimTime gc_busy = 0;
  for (const auto& sv : servers_) {
    for (const auto& ep : sv->storage->gc_log()) {
      gc_episodes++;
      gc_busy += ep.end - ep.start;
      if (ep.trigger == GcCode::kSoft) soft++;
      else if (ep.trigger == GcCode::kRegular) regular++;
      else if (ep.trigger == GcCode::kBg) bg++;
    }
  }
  uint64_t delayed = 0, forced = 0;
  uint64_t absorbed = 0, stalled = 0;
  for (const auto& sv : servers_) {
    delayed += sv->gc->delayed_count();
    forced += sv->gc->forced_after_retries();
    for (const auto& [id, v] : sv->storage->vssds()) {
      absorbed += v.cache_absorbed_writes;
      stalled += v.cache_stalled_writes;
    }
  }
  uint64_t direct = counters_.reads_done - counters_.redirected -
                    counters_.sw_redirected - counters_.gc_blocked_reads;

  nlohmann::ordered_json j;
  j["identity"] = cfg_.identity();
  j["mode"] = to_string(cfg_.mode);
  j["seed"] = cfg_.seed;
  j["scheduler"] = {{"variant", to_string(cfg_.scheduler.variant)},
                    {"coordinated", cfg_.scheduler.coordinated}};
  j["requests"] = {{"generated", counters_.generated},
                   {"reads", counters_.reads_done},
                   {"writes", counters_.writes_done},
                   {"read_iops", double(counters_.reads_in_window) / dur_s},
                   {"write_iops", double(counters_.writes_in_window) / dur_s},
                   {"iops", double(counters_.reads_in_window +
                                   counters_.writes_in_window) /
                                dur_s}};
  j["reads"] = {{"total", counters_.reads_done},
                {"direct", direct},
                {"redirected", counters_.redirected + counters_.sw_redirected},
                {"switch_redirected", counters_.redirected},
                {"software_redirected", counters_.sw_redirected},
                {"gc_blocked", counters_.gc_blocked_reads},
                {"cache_hits", counters_.cache_hits},
                {"unmapped", counters_.unmapped_reads}};
  j["writes"] = {{"cache_absorbed", absorbed},
                 {"stalled", stalled},
                 {"gc_blocked", counters_.gc_blocked_writes}};
  j["latency"] = {{"read", read_hist_.summary()},
                  {"write", write_hist_.summary()},
                  {"read_storage", read_storage_hist_.summary()},
                  {"write_storage", write_storage_hist_.summary()}};
  j["gc"] = {{"episodes", gc_episodes},
             {"soft", soft},
             {"regular", regular},
             {"bg", bg},
             {"delayed", delayed},
             {"forced_after_retries", forced},
             {"busy_ns", gc_busy},
             {"packets_sent", counters_.gc_packets_sent}};
  j["switch"] = {{"entries", tor_->entry_count()},
                 {"memory_bytes_per_table", tor_->memory_bytes_per_table()},
                 {"dropped_unknown_vssd", tor_->stats().dropped_unknown_vssd},
                 {"recirculations", tor_->stats().recirculations},
                 {"redirected_reads", tor_->stats().redirected_reads},
                 {"write_fanouts", tor_->stats().write_fanouts},
                 {"tables_consistent", tor_->tables_consistent()}};
  j["audit"] = {{"additivity_violations", counters_.additivity_violations},
                {"redirect_safety_violations",
                 counters_.redirect_safety_violations},
                {"controller_lookups", counters_.controller_lookups}};
  // wear snapshot
  nlohmann::ordered_json wear = nlohmann::ordered_json::array();
  for (int s = 0; s < int(servers_.size()); s++) {
    std::vector<double> phis;
    for (int d = 0; d < servers_[s]->storage->ssd_count(); d++)
      phis.push_back(servers_[s]->storage->ssd(d).avg_erase_count());
    wear.push_back({{"server", s},
                    {"phi", phis},
                    {"lambda", imbalance(phis)}});
  }
  j["wear"] = {{"servers", wear}, {"swaps", wear_->swaps().size()}};
  j["consistency"] = {{"mismatches", consistency_check().size()}};
  return j;
}

std::string Rack::latency_hist_csv() const {
  std::ostringstream os;
  os << "direction,bucket_lo_ns,bucket_hi_ns,count\n";
  read_hist_.write_csv(os, "read");
  write_hist_.write_csv(os, "write");
  return os.str();
}

std::string Rack::gc_log_csv() const {
  std::ostringstream os;
  os << "vssd,trigger,start_ns,end_ns,blocks_freed,pages_migrated,erases,"
        "out_of_space\n";
  for (const auto& sv : servers_) {
    for (const auto& ep : sv->storage->gc_log()) {
      os << ep.vssd_id << "," << to_string(ep.trigger) << "," << ep.start << ","
         << ep.end << "," << ep.blocks_freed << "," << ep.pages_migrated << ","
         << ep.erases << "," << (ep.out_of_space ? 1 : 0) << "\n";
    }
  }
  return os.str();
}

std::string Rack::wear_csv() const {
  std::ostringstream os;
  os << "time_ns,server,ssd,phi,rate,lambda_local,lambda_rack\n";
  for (const auto& s : wear_->series()) {
    os << s.time << "," << s.server << "," << s.ssd << "," << s.phi << ","
       << s.rate << "," << s.lambda_local << "," << s.lambda_rack << "\n";
  }
  return os.str();
}

}  // namespace racksim
