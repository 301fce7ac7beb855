// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/rng.hpp"

#include <cmath>

#include "noderf/common.hpp"

namespace noderf {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 is kept away from zero so the log is finite.
  double u1 = 0.0;
  do {
    u1 = uniform01();
  } while (u1 <= 0x1.0p-60);
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

int64_t Rng::index(int64_t n) {
  require(n > 0, "Rng::index: n must be positive, got ", n);
  // Rejection sampling avoids modulo bias.
  const uint64_t un = uint64_t(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x = 0;
  do {
    x = next_u64();
  } while (x >= limit);
  return int64_t(x % un);
}

std::vector<double> Rng::normal_vec(int64_t n, double mean, double stddev) {
  std::vector<double> out(static_cast<size_t>(n));
  for (auto& v : out) v = normal(mean, stddev);
  return out;
}

std::vector<double> Rng::uniform_vec(int64_t n, double lo, double hi) {
  std::vector<double> out(static_cast<size_t>(n));
  for (auto& v : out) v = uniform(lo, hi);
  return out;
}

Rng Rng::split(uint64_t salt) {
  // SplitMix64 over (fresh draw, salt); decouples the child stream.
  uint64_t z = next_u64() + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return Rng(z ^ (z >> 31));
}

}  // namespace noderf
