#include "racksim/io_sched.hpp"

#include <algorithm>
#include <stdexcept>

namespace racksim {

SchedVariant sched_variant_from_string(const std::string& s) {
  if (s == "fifo") return SchedVariant::kFifo;
  if (s == "deadline") return SchedVariant::kDeadline;
  if (s == "kyber") return SchedVariant::kKyber;
  throw std::invalid_argument("unknown scheduler variant: " + s);
}

const char* to_string(SchedVariant v) {
  switch (v) {
    case SchedVariant::kFifo: return "fifo";
    case SchedVariant::kDeadline: return "deadline";
    case SchedVariant::kKyber: return "kyber";
  }
  return "?";
}

SchedulerPolicy SchedulerPolicy::configure(SchedVariant v, bool coordinated) {
  SchedulerPolicy p;
  p.variant = v;
  p.coordinated = coordinated;
  switch (v) {
    case SchedVariant::kFifo:
      break;  // no parameters
    case SchedVariant::kDeadline:
      p.read_deadline = coordinated ? usec(1500) : usec(500);
      p.write_deadline = coordinated ? usec(2750) : usec(1750);
      break;
    case SchedVariant::kKyber:
      p.read_target = coordinated ? usec(1750) : usec(750);
      p.write_target = coordinated ? msec(4) : msec(3);
      break;
  }
  return p;
}

void IoScheduler::enqueue(QueuedRequest r) {
  r.order = next_order_++;
  if (policy_.variant == SchedVariant::kFifo) {
    // single queue; direction split exists only for deadline/kyber
    reads_.push_back(r);
  } else {
    (r.is_write ? writes_ : reads_).push_back(r);
  }
}

std::optional<QueuedRequest> IoScheduler::take(
    std::vector<QueuedRequest>& q, SimTime now,
    const std::function<bool(const QueuedRequest&)>& can_serve) {
  int best = -1;
  if (policy_.coordinated) {
    double best_prio = -1.0;
    for (int i = 0; i < int(q.size()); i++) {
      if (!can_serve(q[i])) continue;
      double pr = prio_sched(q[i], now);
      // ties broken by enqueue order; earlier entries come first in q
      if (pr > best_prio) {
        best_prio = pr;
        best = i;
      }
    }
  } else {
    for (int i = 0; i < int(q.size()); i++) {
      if (can_serve(q[i])) {
        best = i;
        break;
      }
    }
  }
  if (best < 0) return std::nullopt;
  QueuedRequest r = q[best];
  q.erase(q.begin() + best);
  return r;
}

std::optional<QueuedRequest> IoScheduler::dispatch(
    SimTime now, const std::function<bool(const QueuedRequest&)>& can_serve) {
  switch (policy_.variant) {
    case SchedVariant::kFifo: {
      auto r = take(reads_, now, can_serve);
      if (r) inflight_[r->is_write ? 1 : 0]++;
      return r;
    }
    case SchedVariant::kDeadline: {
      bool read_breach =
          !reads_.empty() && now - reads_.front().enqueue_time >= policy_.read_deadline;
      bool write_breach =
          !writes_.empty() && now - writes_.front().enqueue_time >= policy_.write_deadline;
      bool read_first;
      if (read_breach)
        read_first = true;
      else if (write_breach)
        read_first = false;
      else
        read_first = !reads_.empty();
      auto r = take(read_first ? reads_ : writes_, now, can_serve);
      if (!r) r = take(read_first ? writes_ : reads_, now, can_serve);
      if (r) inflight_[r->is_write ? 1 : 0]++;
      return r;
    }
    case SchedVariant::kKyber: {
      bool read_ok = inflight_[0] < budget_[0] && !reads_.empty();
      bool write_ok = inflight_[1] < budget_[1] && !writes_.empty();
      std::optional<QueuedRequest> r;
      if (read_ok) r = take(reads_, now, can_serve);
      if (!r && write_ok) r = take(writes_, now, can_serve);
      if (r) inflight_[r->is_write ? 1 : 0]++;
      return r;
    }
  }
  return std::nullopt;
}

void IoScheduler::complete(bool is_write, SimTime storage_latency) {
  int d = is_write ? 1 : 0;
  if (inflight_[d] > 0) inflight_[d]--;
  if (policy_.variant != SchedVariant::kKyber) return;
  epoch_lat_[d].push_back(storage_latency);
  if (++epoch_completions_ >= policy_.kyber_epoch) kyber_epoch_close();
}

void IoScheduler::kyber_epoch_close() {
  // A direction breaching its P95 target halves the other direction's
  // inflight budget; compliance doubles it back (capped).
  for (int d = 0; d < 2; d++) {
    auto& lat = epoch_lat_[d];
    if (lat.empty()) continue;
    std::sort(lat.begin(), lat.end());
    SimTime p95 = lat[size_t(0.95 * double(lat.size() - 1))];
    SimTime target = d == 0 ? policy_.read_target : policy_.write_target;
    int other = 1 - d;
    if (p95 > target)
      budget_[other] = std::max(1, budget_[other] / 2);
    else
      budget_[other] = std::min(policy_.kyber_max_budget, budget_[other] * 2);
  }
  epoch_lat_[0].clear();
  epoch_lat_[1].clear();
  epoch_completions_ = 0;
}

std::vector<QueuedRequest> IoScheduler::divert_writes(uint32_t vssd_id) {
  std::vector<QueuedRequest> out;
  auto pull = [&](std::vector<QueuedRequest>& q, bool writes_only) {
    for (auto it = q.begin(); it != q.end();) {
      if (it->vssd_id == vssd_id && (!writes_only || it->is_write)) {
        out.push_back(*it);
        it = q.erase(it);
      } else {
        ++it;
      }
    }
  };
  pull(reads_, true);  // fifo keeps writes in the single queue
  pull(writes_, true);
  return out;
}

std::vector<QueuedRequest> IoScheduler::extract_vssd(uint32_t vssd_id) {
  std::vector<QueuedRequest> out;
  auto pull = [&](std::vector<QueuedRequest>& q) {
    for (auto it = q.begin(); it != q.end();) {
      if (it->vssd_id == vssd_id) {
        out.push_back(*it);
        it = q.erase(it);
      } else {
        ++it;
      }
    }
  };
  pull(reads_);
  pull(writes_);
  return out;
}

}  // namespace racksim
