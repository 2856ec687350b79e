#include "racksim/wear.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

namespace racksim {

double imbalance(const std::vector<double>& phi) {
  if (phi.empty()) return 1.0;
  double mx = 0, sum = 0;
  for (double p : phi) {
    mx = std::max(mx, p);
    sum += p;
  }
  double avg = sum / double(phi.size());
  if (avg <= 0.0) return 1.0;  // zero wear counts as balanced
  return mx / avg;
}

bool select_swap_pair(const std::vector<double>& phi,
                      const std::vector<double>& rate, double gamma,
                      int* i_max_wear, int* i_min_rate) {
  assert(phi.size() == rate.size());
  if (phi.size() < 2) return false;
  // trigger on the projected post-period imbalance
  std::vector<double> proj(phi.size());
  for (size_t i = 0; i < phi.size(); i++) proj[i] = phi[i] + rate[i];
  if (imbalance(proj) <= 1.0 + gamma) return false;
  int imax = 0, imin = 0;
  for (int i = 1; i < int(phi.size()); i++) {
    if (phi[i] > phi[imax]) imax = i;
    if (rate[i] < rate[imin]) imin = i;
  }
  if (imax == imin) return false;  // self-swap is the identity
  *i_max_wear = imax;
  *i_min_rate = imin;
  return true;
}

// ------------------------------------------------------ event-mode leveler --

WearLeveler::WearLeveler(Engine& eng, SwapHost& host, const WearConfig& cfg)
    : eng_(eng), host_(host), cfg_(cfg) {
  prev_phi_.resize(host.server_count());
  for (int s = 0; s < host.server_count(); s++)
    prev_phi_[s].assign(host.storage(s).ssd_count(), 0.0);
}

void WearLeveler::start() {
  if (cfg_.local_enabled) {
    for (int s = 0; s < host_.server_count(); s++)
      eng_.schedule(cfg_.local_period, EventKind::kWearCheck,
                    [this, s] { local_balance(s); });
  }
  if (cfg_.global_enabled) {
    prev_server_phi_.assign(host_.server_count(), 0.0);
    eng_.schedule(cfg_.global_period, EventKind::kWearCheck,
                  [this] { global_balance(); });
  }
}

double WearLeveler::phi(int server, int ssd) const {
  return const_cast<SwapHost&>(host_).storage(server).ssd(ssd).avg_erase_count();
}

std::vector<double> WearLeveler::server_phis(int server) const {
  auto& st = const_cast<SwapHost&>(host_).storage(server);
  std::vector<double> v(st.ssd_count());
  for (int i = 0; i < st.ssd_count(); i++) v[i] = st.ssd(i).avg_erase_count();
  return v;
}

double WearLeveler::rack_lambda() const {
  std::vector<double> server_avg;
  for (int s = 0; s < host_.server_count(); s++) {
    auto phis = server_phis(s);
    server_avg.push_back(std::accumulate(phis.begin(), phis.end(), 0.0) /
                         double(phis.size()));
  }
  return imbalance(server_avg);
}

void WearLeveler::sample_now() {
  double lr = rack_lambda();
  for (int s = 0; s < host_.server_count(); s++) {
    auto phis = server_phis(s);
    double ll = imbalance(phis);
    for (int d = 0; d < int(phis.size()); d++) {
      double rate = phis[d] - prev_phi_[s][d];
      series_.push_back(WearSample{eng_.now(), s, d, phis[d], rate, ll, lr});
    }
  }
}

void WearLeveler::local_balance(int server) {
  if (draining && draining()) return;
  eng_.schedule(cfg_.local_period, EventKind::kWearCheck,
                [this, server] { local_balance(server); });
  auto phis = server_phis(server);
  std::vector<double> rates(phis.size());
  for (size_t i = 0; i < phis.size(); i++) rates[i] = phis[i] - prev_phi_[server][i];
  sample_now();
  int imax, imin;
  if (select_swap_pair(phis, rates, cfg_.gamma, &imax, &imin))
    execute_swap(server, imax, server, imin);
  prev_phi_[server] = server_phis(server);
}

void WearLeveler::global_balance() {
  if (draining && draining()) return;
  eng_.schedule(cfg_.global_period, EventKind::kWearCheck,
                [this] { global_balance(); });
  int n = host_.server_count();
  std::vector<double> sphi(n), srate(n);
  if (prev_server_phi_.size() != size_t(n)) prev_server_phi_.assign(n, 0.0);
  for (int s = 0; s < n; s++) {
    auto phis = server_phis(s);
    sphi[s] = std::accumulate(phis.begin(), phis.end(), 0.0) / double(phis.size());
    srate[s] = sphi[s] - prev_server_phi_[s];
  }
  int smax, smin;
  if (select_swap_pair(sphi, srate, cfg_.gamma, &smax, &smin)) {
    // most-worn ssd of the max-wear server <-> least-rate ssd of the other
    auto pa = server_phis(smax);
    int ia = int(std::max_element(pa.begin(), pa.end()) - pa.begin());
    auto pb = server_phis(smin);
    std::vector<double> rb(pb.size());
    for (size_t i = 0; i < pb.size(); i++) rb[i] = pb[i] - prev_phi_[smin][i];
    int ib = int(std::min_element(rb.begin(), rb.end()) - rb.begin());
    execute_swap(smax, ia, smin, ib);
  }
  for (int s = 0; s < n; s++) {
    auto phis = server_phis(s);
    prev_server_phi_[s] =
        std::accumulate(phis.begin(), phis.end(), 0.0) / double(phis.size());
  }
}

SwapRecord WearLeveler::execute_swap(int server_a, int ssd_a, int server_b,
                                     int ssd_b) {
  ServerStorage& sa = host_.storage(server_a);
  ServerStorage& sb = host_.storage(server_b);
  SwapRecord rec;
  rec.time = eng_.now();
  rec.server_a = server_a;
  rec.ssd_a = ssd_a;
  rec.server_b = server_b;
  rec.ssd_b = ssd_b;
  rec.cross_server = server_a != server_b;

  auto va = sa.vssds_on_ssd(ssd_a);
  auto vb = sb.vssds_on_ssd(ssd_b);
  for (uint32_t id : va)
    if (sa.vssd(id).gc_active) return rec;  // defer to the next period
  for (uint32_t id : vb)
    if (sb.vssd(id).gc_active) return rec;

  host_.pause_ssd(server_a, ssd_a);
  host_.pause_ssd(server_b, ssd_b);

  std::vector<Vssd> ga, gb;
  for (uint32_t id : va) ga.push_back(sa.detach_vssd(id));
  for (uint32_t id : vb) gb.push_back(sb.detach_vssd(id));

  uint64_t pages = 0;
  for (auto& v : ga) {
    uint32_t id = v.id;
    auto acc = sb.attach_vssd(std::move(v), ssd_b);
    rec.bytes_moved += acc.bytes_moved;
    rec.wear_added += acc.erases;
    pages += acc.pages_programmed;
    if (rec.cross_server) host_.relocated(id, server_b);
  }
  for (auto& v : gb) {
    uint32_t id = v.id;
    auto acc = sa.attach_vssd(std::move(v), ssd_a);
    rec.bytes_moved += acc.bytes_moved;
    rec.wear_added += acc.erases;
    pages += acc.pages_programmed;
    if (rec.cross_server) host_.relocated(id, server_a);
  }

  const SsdGeometry& g = sa.ssd(ssd_a).geom;
  SimTime dur = SimTime(pages) * g.profile.page_program / g.channels;
  if (rec.cross_server)
    dur += SimTime(double(rec.bytes_moved) / cfg_.link_bytes_per_ns);
  rec.duration = dur;

  eng_.schedule(dur, EventKind::kWearCheck, [this, server_a, ssd_a, server_b, ssd_b] {
    host_.resume_ssd(server_a, ssd_a);
    host_.resume_ssd(server_b, ssd_b);
  });
  swaps_.push_back(rec);
  return rec;
}

// ------------------------------------------------------- analytic fast path --

uint64_t staircase_erases(double t_sec, double pps, int pages_per_block,
                          uint32_t total_blocks, double free0, double soft,
                          double restore_margin) {
  if (pps <= 0 || t_sec <= 0) return 0;
  double c = pps / double(pages_per_block);               // blocks consumed /s
  double headroom = (free0 - soft) * double(total_blocks);  // blocks to 1st trigger
  double consumed = c * t_sec;
  if (consumed <= headroom) return 0;
  double batch = std::max(1.0, std::round(restore_margin * double(total_blocks)));
  return uint64_t(batch) * (1 + uint64_t((consumed - headroom) / batch));
}

WearSimResult run_wear_sim(const WearSimConfig& cfg) {
  const int S = cfg.servers, D = cfg.ssds_per_server, K = cfg.vssds_per_ssd;
  const int n_vssd = S * D * K;
  const uint32_t vssd_blocks = cfg.blocks_per_ssd / K;

  // workload assignment: round robin over a seed-shuffled ratio list
  RngStream shuffle_rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 7);
  std::vector<int> order(cfg.workload_write_ratios.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = int(order.size()) - 1; i > 0; i--)
    std::swap(order[i], order[size_t(shuffle_rng.next_below(uint64_t(i + 1)))]);

  struct VState {
    double pps;
    int server, ssd;
    uint64_t erases_prev = 0;  // staircase value at the previous boundary
    double used;
  };
  std::vector<VState> vs(n_vssd);
  for (int i = 0; i < n_vssd; i++) {
    int w = order.empty() ? 0 : order[i % order.size()];
    double ratio =
        cfg.workload_write_ratios.empty() ? 1.0 : cfg.workload_write_ratios[w];
    vs[i].pps = cfg.base_write_pps * ratio;
    vs[i].server = i / (D * K);
    vs[i].ssd = (i / K) % D;
    vs[i].used = 0.55;
  }

  std::vector<std::vector<uint64_t>> ssd_erases(S, std::vector<uint64_t>(D, 0));
  std::vector<std::vector<double>> prev_phi(S, std::vector<double>(D, 0.0));
  std::vector<double> prev_server_phi(S, 0.0);

  WearSimResult res;
  auto phi_of = [&](int s, int d) {
    return double(ssd_erases[s][d]) / double(cfg.blocks_per_ssd);
  };

  auto advance_to = [&](double t_sec) {
    for (auto& v : vs) {
      uint64_t e = staircase_erases(t_sec, v.pps, cfg.pages_per_block, vssd_blocks,
                                    cfg.initial_free, cfg.soft_threshold,
                                    cfg.restore_margin);
      uint64_t delta = e - v.erases_prev;
      v.erases_prev = e;
      ssd_erases[v.server][v.ssd] += delta;
      res.total_erases += delta;
    }
  };

  auto swap_ssds = [&](int sa, int da, int sb, int db, SimTime when) {
    SwapRecord rec;
    rec.time = when;
    rec.server_a = sa;
    rec.ssd_a = da;
    rec.server_b = sb;
    rec.ssd_b = db;
    rec.cross_server = sa != sb;
    uint64_t live_a = 0, live_b = 0;
    for (auto& v : vs) {
      if (v.server == sa && v.ssd == da) live_a += uint64_t(v.used * vssd_blocks);
      if (v.server == sb && v.ssd == db) live_b += uint64_t(v.used * vssd_blocks);
    }
    for (auto& v : vs) {
      if (v.server == sa && v.ssd == da) {
        v.server = sb;
        v.ssd = db;
      } else if (v.server == sb && v.ssd == db) {
        v.server = sa;
        v.ssd = da;
      }
    }
    // destination rewrite: one erase per block of incoming data on each side
    ssd_erases[sb][db] += live_a;
    ssd_erases[sa][da] += live_b;
    rec.wear_added = live_a + live_b;
    rec.bytes_moved =
        (live_a + live_b) * uint64_t(cfg.pages_per_block) * 4096ull;
    res.swap_erases += rec.wear_added;
    res.total_erases += rec.wear_added;
    res.swaps.push_back(rec);
  };

  const int64_t n_local = cfg.horizon / cfg.wear.local_period;
  for (int64_t b = 1; b <= n_local; b++) {
    SimTime t = b * cfg.wear.local_period;
    advance_to(double(t) / 1e9);

    // local balancers, every server
    for (int s = 0; s < S; s++) {
      std::vector<double> phis(D), rates(D);
      for (int d = 0; d < D; d++) {
        phis[d] = phi_of(s, d);
        rates[d] = phis[d] - prev_phi[s][d];
      }
      if (cfg.wear.local_enabled) {
        int imax, imin;
        if (select_swap_pair(phis, rates, cfg.wear.gamma, &imax, &imin))
          swap_ssds(s, imax, s, imin, t);
      }
      for (int d = 0; d < D; d++) prev_phi[s][d] = phi_of(s, d);
    }

    // global balancer at its own cadence (boundary aligned to local period)
    if (cfg.wear.global_enabled &&
        (t % cfg.wear.global_period) < cfg.wear.local_period) {
      std::vector<double> sphi(S), srate(S);
      for (int s = 0; s < S; s++) {
        double sum = 0;
        for (int d = 0; d < D; d++) sum += phi_of(s, d);
        sphi[s] = sum / D;
        srate[s] = sphi[s] - prev_server_phi[s];
      }
      int smax, smin;
      if (select_swap_pair(sphi, srate, cfg.wear.gamma, &smax, &smin)) {
        std::vector<double> pa(D), rb(D);
        for (int d = 0; d < D; d++) pa[d] = phi_of(smax, d);
        int ia = int(std::max_element(pa.begin(), pa.end()) - pa.begin());
        for (int d = 0; d < D; d++) rb[d] = phi_of(smin, d) - prev_phi[smin][d];
        int ib = int(std::min_element(rb.begin(), rb.end()) - rb.begin());
        swap_ssds(smax, ia, smin, ib, t);
        prev_phi[smax][ia] = phi_of(smax, ia);
        prev_phi[smin][ib] = phi_of(smin, ib);
      }
      for (int s = 0; s < S; s++) {
        double sum = 0;
        for (int d = 0; d < D; d++) sum += phi_of(s, d);
        prev_server_phi[s] = sum / D;
      }
    }

    WearSimResult::Boundary bd;
    bd.time = t;
    bd.phi.resize(S);
    bd.lambda_local.resize(S);
    std::vector<double> savg(S);
    for (int s = 0; s < S; s++) {
      bd.phi[s].resize(D);
      for (int d = 0; d < D; d++) bd.phi[s][d] = phi_of(s, d);
      bd.lambda_local[s] = imbalance(bd.phi[s]);
      savg[s] = std::accumulate(bd.phi[s].begin(), bd.phi[s].end(), 0.0) / D;
      if (b > 2)
        res.max_lambda_after_warmup =
            std::max(res.max_lambda_after_warmup, bd.lambda_local[s]);
    }
    bd.lambda_rack = imbalance(savg);
    if (b > 2)
      res.max_rack_lambda_after_warmup =
          std::max(res.max_rack_lambda_after_warmup, bd.lambda_rack);
    res.boundaries.push_back(std::move(bd));
  }
  return res;
}

}  // namespace racksim
