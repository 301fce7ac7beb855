// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace noderf {

// Deterministic random source. The raw stream is std::mt19937_64, whose
// output sequence is fixed by the standard; the distribution transforms are
// written out here because the std::*_distribution classes are not.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53 bits of mantissa.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller (pairs are cached).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer on [0, n), n > 0.
  int64_t index(int64_t n);

  std::vector<double> normal_vec(int64_t n, double mean = 0.0, double stddev = 1.0);
  std::vector<double> uniform_vec(int64_t n, double lo, double hi);

  // Derives an independent stream; used to give each consumer its own seed so
  // config edits in one phase do not shift the draws of another.
  Rng split(uint64_t salt);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace noderf
