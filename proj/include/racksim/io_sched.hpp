#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "racksim/sim_time.hpp"

namespace racksim {

// Ring of the last 100 incoming-packet network latencies. The reported mean
// is the exact arithmetic mean of the current contents.
class SlidingWindow {
 public:
  static constexpr int kCapacity = 100;

  double update(SimTime sample) {
    if (size_ == kCapacity) {
      sum_ -= buf_[head_];
      buf_[head_] = sample;
      head_ = (head_ + 1) % kCapacity;
    } else {
      buf_[(head_ + size_) % kCapacity] = sample;
      size_++;
    }
    sum_ += sample;
    return mean();
  }

  double mean() const { return double(sum_) / double(size_); }
  int size() const { return size_; }
  int64_t sum() const { return sum_; }

 private:
  std::array<int64_t, kCapacity> buf_{};
  int head_ = 0;
  int size_ = 0;
  int64_t sum_ = 0;
};

// Separate windows per (vssd, direction); incoming reads and writes have
// different return packet sizes.
class ReturnPredictor {
 public:
  explicit ReturnPredictor(double prior_ns = 100'000.0) : prior_(prior_ns) {}

  double update(uint32_t vssd, bool is_write, SimTime sample) {
    return windows_[key(vssd, is_write)].update(sample);
  }

  double predict(uint32_t vssd, bool is_write) const {
    auto it = windows_.find(key(vssd, is_write));
    if (it == windows_.end() || it->second.size() == 0) return prior_;
    return it->second.mean();
  }

  const SlidingWindow* window(uint32_t vssd, bool is_write) const {
    auto it = windows_.find(key(vssd, is_write));
    return it == windows_.end() ? nullptr : &it->second;
  }

 private:
  static uint64_t key(uint32_t vssd, bool is_write) {
    return (uint64_t(vssd) << 1) | (is_write ? 1 : 0);
  }
  double prior_;
  std::map<uint64_t, SlidingWindow> windows_;
};

enum class SchedVariant { kFifo, kDeadline, kKyber };

SchedVariant sched_variant_from_string(const std::string& s);
const char* to_string(SchedVariant v);

struct SchedulerPolicy {
  SchedVariant variant = SchedVariant::kFifo;
  bool coordinated = false;
  SimTime read_deadline = msec(1) / 2;   // deadline variant
  SimTime write_deadline = usec(1750);
  SimTime read_target = usec(750);       // kyber variant, P95 targets
  SimTime write_target = msec(3);
  int kyber_epoch = 1000;
  int kyber_init_budget = 16;
  int kyber_max_budget = 128;

  // Paper-default parameter sets; coordinated variants use targets inflated
  // for P95 network delay.
  static SchedulerPolicy configure(SchedVariant v, bool coordinated);
};

struct QueuedRequest {
  uint64_t ctx = 0;  // opaque handle of the owning lifecycle record
  uint32_t vssd_id = 0;
  bool is_write = false;
  SimTime net_time = 0;
  SimTime enqueue_time = 0;
  double predict_time = 0;  // ns
  uint64_t order = 0;       // enqueue sequence, tie-break
};

inline double prio_sched(const QueuedRequest& r, SimTime now) {
  return double(r.net_time) + double(now - r.enqueue_time) + r.predict_time;
}

// One instance per storage server. The caller supplies `can_serve`
// (channel-availability and pause checks); the scheduler only decides order.
class IoScheduler {
 public:
  explicit IoScheduler(const SchedulerPolicy& p) : policy_(p) {
    budget_[0] = budget_[1] = p.kyber_init_budget;
  }

  void enqueue(QueuedRequest r);
  std::optional<QueuedRequest> dispatch(
      SimTime now, const std::function<bool(const QueuedRequest&)>& can_serve);
  void complete(bool is_write, SimTime storage_latency);

  // Pulls every queued write for a vssd (GC just started; they go to the
  // write cache instead).
  std::vector<QueuedRequest> divert_writes(uint32_t vssd_id);
  // Pulls everything queued for a vssd (placement moved to another server).
  std::vector<QueuedRequest> extract_vssd(uint32_t vssd_id);

  size_t queued() const { return reads_.size() + writes_.size(); }
  size_t queued_reads() const { return reads_.size(); }
  size_t queued_writes() const { return writes_.size(); }
  int inflight(bool is_write) const { return inflight_[is_write ? 1 : 0]; }
  int budget(bool is_write) const { return budget_[is_write ? 1 : 0]; }
  const SchedulerPolicy& policy() const { return policy_; }

 private:
  std::optional<QueuedRequest> take(
      std::vector<QueuedRequest>& q, SimTime now,
      const std::function<bool(const QueuedRequest&)>& can_serve);
  void kyber_epoch_close();

  SchedulerPolicy policy_;
  std::vector<QueuedRequest> reads_, writes_;
  uint64_t next_order_ = 0;
  int inflight_[2] = {0, 0};
  int budget_[2] = {16, 16};
  std::vector<SimTime> epoch_lat_[2];
  int epoch_completions_ = 0;
};

}  // namespace racksim
