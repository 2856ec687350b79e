#include "racksim/traffic.hpp"

#include <cmath>
#include <stdexcept>

namespace racksim {

// ----------------------------------------------------------------- zipfian --

double ZipfGenerator::zeta(uint64_t n, double theta) {
  double z = 0.0;
  for (uint64_t i = 1; i <= n; i++) z += 1.0 / std::pow(double(i), theta);
  return z;
}

ZipfGenerator::ZipfGenerator(uint64_t n, double theta) : n_(n), theta_(theta) {
  if (n == 0) throw std::invalid_argument("zipf key space must be nonempty");
  if (theta <= 0.0 || theta >= 1.0)
    throw std::invalid_argument("zipf theta must be in (0,1)");
  zetan_ = zeta(n, theta);
  alpha_ = 1.0 / (1.0 - theta);
  eta_ = (1.0 - std::pow(2.0 / double(n), 1.0 - theta)) /
         (1.0 - zeta(2, theta) / zetan_);
}

uint64_t ZipfGenerator::next(RngStream& rng) {
  double u = rng.next_uniform();
  double uz = u * zetan_;
  if (uz < 1.0) return 0;
  if (uz < 1.0 + std::pow(0.5, theta_)) return 1;
  uint64_t r = uint64_t(double(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
  return r >= n_ ? n_ - 1 : r;
}

// ---------------------------------------------------------------- workload --

void WorkloadSpec::validate() const {
  if (write_ratio < 0.0 || write_ratio > 1.0)
    throw std::invalid_argument("write_ratio must be in [0,1]");
  if (dist == Dist::kZipfian && (theta <= 0.0 || theta >= 1.0))
    throw std::invalid_argument("zipf theta must be in (0,1)");
  if (request_size == 0) throw std::invalid_argument("request_size must be > 0");
  if (key_space == 0) throw std::invalid_argument("key_space must be > 0");
}

RequestSkeleton WorkloadGen::next(RngStream& rng) {
  RequestSkeleton r;
  if (spec_.pattern == WorkloadSpec::Pattern::kPhased) {
    // a long write burst followed by a read burst, keeping the overall ratio
    uint64_t writes = uint64_t(double(spec_.phase_len) * spec_.write_ratio + 0.5);
    r.is_write = phase_pos_ < writes;
    phase_pos_ = (phase_pos_ + 1) % spec_.phase_len;
  } else {
    r.is_write = rng.next_bernoulli(spec_.write_ratio);
  }
  switch (spec_.dist) {
    case WorkloadSpec::Dist::kZipfian:
      r.key = zipf_->next(rng);
      break;
    case WorkloadSpec::Dist::kUniform:
      r.key = rng.next_below(spec_.key_space);
      break;
    case WorkloadSpec::Dist::kSequential:
      r.key = seq_key_;
      seq_key_ = (seq_key_ + 1) % spec_.key_space;
      break;
  }
  return r;
}

// ----------------------------------------------------------------- network --

NetProfile NetProfile::by_class(const std::string& name) {
  NetProfile p;
  p.cls = name;
  // defaults: lognormal shapes ordered fast < medium < slow, P99 ~ 5x median
  if (name == "fast") {
    p.median_ns = 40000.0;
  } else if (name == "medium") {
    p.median_ns = 200000.0;
  } else if (name == "slow") {
    p.median_ns = 1000000.0;
  } else if (name == "trace" || name == "custom") {
    // caller fills the fields
  } else {
    throw std::invalid_argument("unknown network class: " + name);
  }
  return p;
}

SimTime NetProfile::sample(bool outbound, SimTime now, RngStream& rng) {
  SimTime base;
  auto& trace = outbound ? trace_out : trace_in;
  if (!trace.empty()) {
    auto& cur = outbound ? cursor_out : cursor_in;
    base = trace[cur % trace.size()];
    cur++;
  } else {
    base = SimTime(rng.next_lognormal_median(median_ns, sigma));
  }
  for (const auto& ep : congestion)
    if (now >= ep.start && now < ep.start + ep.duration) base += ep.extra;
  return base < 0 ? 0 : base;
}

// ------------------------------------------------------------ switch queue --

QueuePolicy queue_policy_from_string(const std::string& s) {
  if (s == "none") return QueuePolicy::kNone;
  if (s == "token-bucket") return QueuePolicy::kTokenBucket;
  if (s == "fair-queue") return QueuePolicy::kFairQueue;
  if (s == "priority") return QueuePolicy::kPriority;
  throw std::invalid_argument("unknown switch queue policy: " + s);
}

const char* to_string(QueuePolicy p) {
  switch (p) {
    case QueuePolicy::kNone: return "none";
    case QueuePolicy::kTokenBucket: return "token-bucket";
    case QueuePolicy::kFairQueue: return "fair-queue";
    case QueuePolicy::kPriority: return "priority";
  }
  return "?";
}

void SwitchQueue::enqueue(uint32_t flow, int prio_class,
                          std::function<void(SimTime)> deliver) {
  SimTime now = eng_.now();
  switch (cfg_.policy) {
    case QueuePolicy::kNone:
      served_[flow]++;
      deliver(0);
      return;
    case QueuePolicy::kTokenBucket: {
      // GCRA: emission interval T, burst tolerance (burst-1)*T
      SimTime T = SimTime(1e9 / cfg_.tb_rate_pps);
      SimTime tau = SimTime(cfg_.tb_burst - 1) * T;
      SimTime tat = std::max(now, tat_.count(flow) ? tat_[flow] : now);
      SimTime delay = std::max<SimTime>(0, tat - tau - now);
      tat_[flow] = std::max(now, tat) + T;
      served_[flow]++;
      if (delay == 0) {
        deliver(0);
      } else {
        eng_.schedule(delay, EventKind::kSwitchEgress,
                      [deliver = std::move(deliver), delay] { deliver(delay); });
      }
      return;
    }
    case QueuePolicy::kPriority:
      classes_[prio_class].push_back(Item{flow, now, std::move(deliver)});
      if (!busy_) serve_next();
      return;
    case QueuePolicy::kFairQueue:
      flows_[flow].push_back(Item{flow, now, std::move(deliver)});
      if (!busy_) serve_next();
      return;
  }
}

void SwitchQueue::serve_next() {
  Item item{0, 0, nullptr};
  bool found = false;
  if (cfg_.policy == QueuePolicy::kPriority) {
    for (auto& [cls, q] : classes_) {  // lowest class number first
      if (!q.empty()) {
        item = std::move(q.front());
        q.pop_front();
        found = true;
        break;
      }
    }
  } else {
    // deficit round robin with one-packet quantum over sorted flow ids
    auto it = flows_.upper_bound(rr_last_);
    for (size_t i = 0; i <= flows_.size() && !found; i++) {
      if (it == flows_.end()) it = flows_.begin();
      if (it == flows_.end()) break;
      if (!it->second.empty()) {
        item = std::move(it->second.front());
        it->second.pop_front();
        rr_last_ = it->first;
        found = true;
        break;
      }
      ++it;
    }
  }
  if (!found) return;
  busy_ = true;
  eng_.schedule(cfg_.service_time, EventKind::kSwitchEgress,
                [this, item = std::move(item)]() mutable {
                  busy_ = false;
                  served_[item.flow]++;
                  item.deliver(eng_.now() - item.arrival);
                  serve_next();
                });
}

}  // namespace racksim
