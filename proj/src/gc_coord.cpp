#include "racksim/gc_coord.hpp"

namespace racksim {

GcCoordinator::GcCoordinator(Engine& eng, ServerStorage& storage,
                             const GcMonitorConfig& cfg, uint32_t server_ip,
                             uint32_t switch_ip)
    : eng_(eng),
      storage_(storage),
      cfg_(cfg),
      server_ip_(server_ip),
      switch_ip_(switch_ip),
      idle_(cfg.alpha) {
  cfg_.validate();
}

void GcCoordinator::start() {
  for (const auto& [id, v] : storage_.vssds()) watch_vssd(id);
}

void GcCoordinator::watch_vssd(uint32_t vssd_id) {
  const Vssd& v = storage_.vssd(vssd_id);
  if (storage_.ssd(v.ssd_index).geom.profile.gc_free()) return;
  // Checks are jittered per vssd so replicas fed identical writes do not
  // emit soft requests at the same instant by construction.
  RngStream& jitter = eng_.rng().register_stream("gc-jitter");
  SimTime offset = SimTime(jitter.next_uniform() * double(cfg_.check_period));
  eng_.schedule(offset, EventKind::kPeriodicGcCheck,
                [this, vssd_id] { periodic_check(vssd_id); });
}

std::optional<GcCode> GcCoordinator::evaluate(uint32_t vssd_id) const {
  double ratio = storage_.free_block_ratio(vssd_id);
  if (ratio < cfg_.gc_threshold) return GcCode::kRegular;
  if (ratio < cfg_.soft_threshold) return GcCode::kSoft;
  if (idle_.prediction(vssd_id) > cfg_.bg_idle_threshold) return GcCode::kBg;
  return std::nullopt;
}

Packet GcCoordinator::make_gc_packet(uint32_t vssd_id, GcCode kind) const {
  Packet pkt;
  pkt.op = OpCode::kGcOp;
  pkt.vssd_id = vssd_id;
  pkt.gc = kind;
  pkt.src = server_ip_;
  pkt.dst = switch_ip_;
  return pkt;
}

void GcCoordinator::periodic_check(uint32_t vssd_id) {
  if (!storage_.has_vssd(vssd_id)) return;  // deleted; stop the timer chain
  if (draining && draining()) return;
  eng_.schedule(cfg_.check_period, EventKind::kPeriodicGcCheck,
                [this, vssd_id] { periodic_check(vssd_id); });

  Vssd& v = storage_.vssd(vssd_id);
  if (v.gc_active) return;

  if (v.channel_group >= 0) {
    group_check(vssd_id);
    return;
  }

  // un-acknowledged request from a previous period
  auto pit = pending_.find(vssd_id);
  if (pit != pending_.end() && pit->second.awaiting) {
    Pending p = pit->second;
    pending_.erase(pit);
    if (p.kind == GcCode::kRegular) {
      p.retries_used++;
      if (p.retries_used > cfg_.retries) {
        // regular GC cannot be denied; after the retry budget it runs anyway
        forced_++;
        begin_gc(vssd_id, GcCode::kRegular);
        return;
      }
    }
    // fall through and re-evaluate at current ratios, keeping retry credit
    auto kind = evaluate(vssd_id);
    if (!kind) return;
    Pending np{*kind, p.kind == GcCode::kRegular ? p.retries_used : 0, true};
    pending_[vssd_id] = np;
    if (send) send(make_gc_packet(vssd_id, *kind));
    return;
  }

  auto kind = evaluate(vssd_id);
  if (!kind) return;

  if (!coordinated) {
    // no GC awareness anywhere: plain threshold GC at the hard threshold
    if (*kind == GcCode::kRegular) begin_gc(vssd_id, GcCode::kRegular);
    return;
  }

  if (*kind == GcCode::kBg) {
    // background GC runs without switch approval; the packet only updates
    // the shared state
    bg_started_++;
    if (send) send(make_gc_packet(vssd_id, GcCode::kBg));
    begin_gc(vssd_id, GcCode::kBg);
    return;
  }
  pending_[vssd_id] = Pending{*kind, 0, true};
  if (send) send(make_gc_packet(vssd_id, *kind));
}

void GcCoordinator::begin_gc(uint32_t vssd_id, GcCode kind) {
  storage_.run_gc(vssd_id, kind, [this, vssd_id](const GcEpisode& ep) {
    if (coordinated && send) send(make_gc_packet(vssd_id, GcCode::kFinish));
    if (on_episode) on_episode(ep);
  });
}

void GcCoordinator::handle_reply(const Packet& reply) {
  if (reply.op != OpCode::kGcOp) return;
  uint32_t v = reply.vssd_id;

  // channel-group member?
  if (storage_.has_vssd(v) && storage_.vssd(v).channel_group >= 0) {
    int g = storage_.vssd(v).channel_group;
    auto git = group_pending_.find(g);
    if (git == group_pending_.end()) return;
    GroupPending& gp = git->second;
    gp.awaiting.erase(v);
    if (reply.gc == GcCode::kAccept) {
      if (gp.aborting) {
        // group already deferred; release this member's switch state
        if (send) send(make_gc_packet(v, GcCode::kFinish));
      } else {
        gp.accepted.push_back(v);
      }
    } else if (reply.gc == GcCode::kDelay) {
      // a delay from any member delays the whole channel group
      delayed_++;
      gp.aborting = true;
      for (uint32_t m : gp.accepted)
        if (send) send(make_gc_packet(m, GcCode::kFinish));
      gp.accepted.clear();
    }
    if (gp.awaiting.empty()) {
      if (!gp.aborting) {
        GcCode kind = gp.kind;
        group_pending_.erase(git);
        storage_.run_group_gc(g, kind, [this](const GcEpisode& ep) {
          if (coordinated && send)
            send(make_gc_packet(ep.vssd_id, GcCode::kFinish));
          if (on_episode) on_episode(ep);
        });
      } else {
        group_pending_.erase(git);
      }
    }
    return;
  }

  auto pit = pending_.find(v);
  if (pit == pending_.end()) return;
  GcCode kind = pit->second.kind;
  if (reply.gc == GcCode::kAccept) {
    pending_.erase(pit);
    begin_gc(v, kind);
  } else if (reply.gc == GcCode::kDelay) {
    delayed_++;
    pending_.erase(pit);  // re-request at the next periodic check
  }
}

void GcCoordinator::group_check(uint32_t member_id) {
  Vssd& v = storage_.vssd(member_id);
  int g = v.channel_group;
  auto git = group_pending_.find(g);
  if (git != group_pending_.end()) {
    GroupPending& gp = git->second;
    // replies lost for a whole period: retry, forcing regular GC once the
    // retry budget is spent
    if (!gp.awaiting.empty() && eng_.now() - gp.sent_at >= cfg_.check_period) {
      GcCode kind = gp.kind;
      int used = gp.retries_used + 1;
      group_pending_.erase(git);
      if (kind == GcCode::kRegular && used > cfg_.retries) {
        forced_++;
        storage_.run_group_gc(g, kind, [this](const GcEpisode& ep) {
          if (coordinated && send)
            send(make_gc_packet(ep.vssd_id, GcCode::kFinish));
          if (on_episode) on_episode(ep);
        });
      } else {
        send_group_request(g, kind, used);
      }
    }
    return;
  }
  ChannelGroup& gr = storage_.group(g);
  for (uint32_t m : gr.members)
    if (storage_.vssd(m).gc_active) return;

  double ratio = storage_.free_block_ratio(member_id);
  if (ratio >= cfg_.soft_threshold) return;

  // Exhaust borrowing before asking the group to collect.
  if (ratio >= cfg_.gc_threshold && storage_.borrow_blocks(member_id)) return;

  double gratio = storage_.group_free_ratio(g);
  GcCode kind = gratio < cfg_.gc_threshold ? GcCode::kRegular : GcCode::kSoft;
  if (!coordinated) {
    if (kind == GcCode::kRegular)
      storage_.run_group_gc(g, kind, [this](const GcEpisode& ep) {
        if (on_episode) on_episode(ep);
      });
    return;
  }
  send_group_request(g, kind, 0);
}

void GcCoordinator::send_group_request(int group_id, GcCode kind, int retries_used) {
  ChannelGroup& gr = storage_.group(group_id);
  GroupPending gp;
  gp.kind = kind;
  gp.retries_used = retries_used;
  gp.sent_at = eng_.now();
  for (uint32_t m : gr.members) gp.awaiting.insert(m);
  group_pending_[group_id] = std::move(gp);
  // one packet per member vssd
  for (uint32_t m : gr.members)
    if (send) send(make_gc_packet(m, kind));
}

}  // namespace racksim
