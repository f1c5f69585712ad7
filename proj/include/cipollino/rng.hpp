#pragma once

// Seeded random source. All randomness in the library flows through this
// wrapper so runs are reproducible from a single integer seed and results
// do not depend on the platform's distribution implementations.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace cipollino {

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased draw in [0, n). Rejection sampling, no distribution objects.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng::below: n must be > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  // Poisson count via exponential inter-arrival accumulation; fine for the
  // small rates used in workload generation.
  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    int count = 0;
    double sum = 0.0;
    for (;;) {
      sum += exponential(1.0);
      if (sum >= lambda) break;
      ++count;
    }
    return count;
  }

  // Derive an independent stream, used to decouple workload generation from
  // client decisions under one top-level seed.
  SeededRng fork(std::uint64_t stream) {
    return SeededRng(next_u64() ^ (stream * 0x9e3779b97f4a7c15ULL));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cipollino
