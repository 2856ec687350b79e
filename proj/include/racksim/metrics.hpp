#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "racksim/sim_time.hpp"

#include "json.hpp"

namespace racksim {

// Logarithmic latency histogram, 1 us .. 10 s at 5% bucket width, so P99.9
// stays resolvable at desk-scale sample counts.
class LatencyHistogram {
 public:
  LatencyHistogram() : counts_(kBuckets, 0) {}

  void add(SimTime v) {
    n_++;
    sum_ += double(v);
    if (v > max_) max_ = v;
    counts_[index(v)]++;
  }

  uint64_t count() const { return n_; }
  SimTime max() const { return max_; }
  double mean() const { return n_ == 0 ? 0.0 : sum_ / double(n_); }

  // Upper edge of the bucket holding the p-quantile (monotone in p).
  double percentile(double p) const {
    if (n_ == 0) return 0.0;
    uint64_t target = uint64_t(std::ceil(p * double(n_)));
    if (target == 0) target = 1;
    uint64_t seen = 0;
    for (int i = 0; i < kBuckets; i++) {
      seen += counts_[i];
      if (seen >= target) return upper_edge(i);
    }
    return upper_edge(kBuckets - 1);
  }

  void write_csv(std::ostream& os, const std::string& tag) const {
    for (int i = 0; i < kBuckets; i++) {
      if (counts_[i] == 0) continue;
      os << tag << "," << uint64_t(lower_edge(i)) << "," << uint64_t(upper_edge(i))
         << "," << counts_[i] << "\n";
    }
  }

  nlohmann::ordered_json summary() const {
    return {{"count", n_},        {"mean_ns", mean()},
            {"p50_ns", percentile(0.50)}, {"p95_ns", percentile(0.95)},
            {"p99_ns", percentile(0.99)}, {"p999_ns", percentile(0.999)},
            {"max_ns", max_}};
  }

 private:
  static constexpr double kLo = 1e3;    // 1 us in ns
  static constexpr double kRatio = 1.05;
  static constexpr int kBuckets = 333;  // ceil(ln(1e7)/ln(1.05)) + underflow

  static int index(SimTime v) {
    if (v < SimTime(kLo)) return 0;
    int i = 1 + int(std::log(double(v) / kLo) / std::log(kRatio));
    return i >= kBuckets ? kBuckets - 1 : i;
  }
  static double lower_edge(int i) {
    return i == 0 ? 0.0 : kLo * std::pow(kRatio, i - 1);
  }
  static double upper_edge(int i) { return kLo * std::pow(kRatio, i); }

  std::vector<uint64_t> counts_;
  uint64_t n_ = 0;
  double sum_ = 0;
  SimTime max_ = 0;
};

}  // namespace racksim
