#pragma once

#include <cstdint>

namespace racksim {

// All simulation time is integer nanoseconds since simulation start.
// Integer time keeps event ordering exact; float time drifts.
using SimTime = int64_t;

constexpr SimTime kUs = 1000;
constexpr SimTime kMs = 1000 * 1000;
constexpr SimTime kSec = 1000LL * 1000 * 1000;

constexpr SimTime usec(int64_t v) { return v * kUs; }
constexpr SimTime msec(int64_t v) { return v * kMs; }
constexpr SimTime seconds(int64_t v) { return v * kSec; }

inline SimTime from_seconds(double s) {
  return static_cast<SimTime>(s * 1e9 + 0.5);
}

}  // namespace racksim
