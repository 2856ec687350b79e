#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace racksim {

// Deterministic RNG stream. mt19937_64 output is pinned by the C++ standard,
// but the std distributions are not, so every distribution here is hand-rolled
// from raw 64-bit draws. Same (seed, stream name) => same sequence on any
// platform/compiler.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {
    // splitmix64 warm-up so nearby seeds decorrelate
    for (int i = 0; i < 4; i++) next_u64();
  }

  uint64_t next_u64() {
    // xorshift* variant seeded via splitmix64 step
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>(next_uniform() * static_cast<double>(n)) % n;
  }

  bool next_bernoulli(double p) { return next_uniform() < p; }

  double next_exponential(double mean) {
    double u = next_uniform();
    return -mean * std::log1p(-u);
  }

  double next_normal() {
    // Box-Muller; second value cached for determinism
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    while (u1 <= 0.0) u1 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // lognormal parameterized by its median: exp(ln(median) + sigma*Z)
  double next_lognormal_median(double median, double sigma) {
    return median * std::exp(sigma * next_normal());
  }

 private:
  uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Named streams hanging off one master seed. Adding a consumer with a new
// stream name never perturbs existing streams' sequences.
class RngRegistry {
 public:
  explicit RngRegistry(uint64_t master_seed) : master_(master_seed) {}

  RngStream& register_stream(const std::string& name) {
    auto it = streams_.find(name);
    if (it != streams_.end()) return it->second;
    uint64_t h = 1469598103934665603ULL ^ master_;
    for (char c : name) {
      h ^= static_cast<uint8_t>(c);
      h *= 1099511628211ULL;
    }
    return streams_.emplace(name, RngStream(h)).first->second;
  }

  RngStream& stream(const std::string& name) {
    auto it = streams_.find(name);
    if (it == streams_.end())
      throw std::invalid_argument("unknown rng stream: " + name);
    return it->second;
  }

  uint64_t master_seed() const { return master_; }

 private:
  uint64_t master_;
  std::map<std::string, RngStream> streams_;
};

}  // namespace racksim
