// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "noderf/rng.hpp"

using noderf::Rng;

TEST_SUITE_BEGIN("rng");

TEST_CASE("same seed reproduces the stream bit-for-bit") {
  Rng a(12345), b(12345);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(12345), d(12345);
  for (int i = 0; i < 100; ++i) {
    CHECK(c.uniform01() == d.uniform01());
    CHECK(c.normal() == d.normal());
  }
}

TEST_CASE("uniform01 stays in [0,1) and looks uniform") {
  Rng rng(7);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal has the requested moments") {
  Rng rng(21);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal(0.0, 0.1);
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / n;
  double std = std::sqrt(sumsq / n - mean * mean);
  CHECK(std::abs(mean) < 0.002);
  // Matches the latent-init tolerance band used downstream.
  CHECK(std >= 0.098);
  CHECK(std <= 0.102);
}

TEST_CASE("index(n) is always in range and roughly uniform") {
  Rng rng(4);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    int64_t k = rng.index(10);
    REQUIRE(k >= 0);
    REQUIRE(k < 10);
    counts[size_t(k)]++;
  }
  for (int c : counts) {
    CHECK(c > n / 10 - 600);
    CHECK(c < n / 10 + 600);
  }
}

TEST_CASE("split streams are decoupled and deterministic") {
  Rng root1(9), root2(9);
  Rng s1 = root1.split(1);
  Rng s2 = root2.split(1);
  for (int i = 0; i < 50; ++i) CHECK(s1.next_u64() == s2.next_u64());

  Rng root3(9);
  Rng a = root3.split(1);
  Rng b = root3.split(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += (a.next_u64() == b.next_u64());
  CHECK(same == 0);
}

TEST_SUITE_END();
