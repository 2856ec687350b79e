#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <functional>
#include <unordered_set>
#include <vector>

#include "racksim/rng.hpp"
#include "racksim/sim_time.hpp"

namespace racksim {

enum class EventKind : uint8_t {
  kPacketArrival,
  kGcStart,
  kGcFinish,
  kPeriodicGcCheck,
  kWearCheck,
  kRequestComplete,
  kCacheFlush,
  kIdleCheck,
  kOpComplete,
  kClientTick,
  kSwitchEgress,
  kGeneric,
};

using EventHandle = uint64_t;

// Single-threaded discrete-event core. Events with equal fire time dispatch
// in schedule order (seq tie-break), so a run is a pure function of
// (schedule sequence, seed).
class Engine {
 public:
  explicit Engine(uint64_t master_seed) : rng_(master_seed) {}

  SimTime now() const { return now_; }

  EventHandle schedule(SimTime delay, EventKind kind, std::function<void()> fn) {
    assert(delay >= 0);
    uint64_t seq = next_seq_++;
    heap_.push_back(Ev{now_ + delay, seq, kind, std::move(fn)});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
    return seq;
  }

  // No-op if the event already fired.
  void cancel(EventHandle h) {
    if (cancelled_.insert(h).second) cancelled_live_++;
  }

  bool empty() const { return heap_.size() == cancelled_live_; }

  // Dispatches the next pending event; returns false if none.
  bool step() {
    while (!heap_.empty()) {
      std::pop_heap(heap_.begin(), heap_.end(), Later{});
      Ev ev = std::move(heap_.back());
      heap_.pop_back();
      if (auto it = cancelled_.find(ev.seq); it != cancelled_.end()) {
        cancelled_.erase(it);
        cancelled_live_--;
        continue;
      }
      assert(ev.at >= now_);
      now_ = ev.at;
      dispatched_++;
      ev.fn();
      return true;
    }
    return false;
  }

  // Dispatches every event with fire_at <= end, then sets the clock to end.
  // Returns the number of events dispatched.
  uint64_t run_until(SimTime end) {
    assert(end >= now_);
    uint64_t n = 0;
    while (!heap_.empty() && heap_.front().at <= end) {
      if (step()) n++;
    }
    now_ = end;
    return n;
  }

  // Drains the queue completely (used by tests and quiescence checks).
  uint64_t run_to_quiescence() {
    uint64_t n = 0;
    while (step()) n++;
    return n;
  }

  uint64_t dispatched() const { return dispatched_; }

  RngRegistry& rng() { return rng_; }

 private:
  struct Ev {
    SimTime at;
    uint64_t seq;
    EventKind kind;
    std::function<void()> fn;
  };
  // max-heap comparator inverted: top = earliest (at, seq)
  struct Later {
    bool operator()(const Ev& a, const Ev& b) const {
      if (a.at != b.at) return a.at > b.at;
      return a.seq > b.seq;
    }
  };

  SimTime now_ = 0;
  uint64_t next_seq_ = 1;
  uint64_t dispatched_ = 0;
  std::vector<Ev> heap_;
  std::unordered_set<uint64_t> cancelled_;
  size_t cancelled_live_ = 0;
  RngRegistry rng_;
};

}  // namespace racksim
