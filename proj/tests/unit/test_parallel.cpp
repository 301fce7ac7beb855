// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <atomic>
#include <cstring>
#include <mutex>
#include <set>
#include <vector>

#include "noderf/common.hpp"
#include "noderf/parallel.hpp"

using noderf::parallel_for;
using noderf::set_thread_count;

TEST_SUITE_BEGIN("parallel");

TEST_CASE("every index is visited exactly once") {
  for (int threads : {1, 3, 8}) {
    set_thread_count(threads);
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(1000, 64, [&](int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i) hits[size_t(i)]++;
    });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
  set_thread_count(1);
}

TEST_CASE("chunk grid depends only on n and chunk size") {
  auto chunks_for = [](int threads) {
    set_thread_count(threads);
    std::mutex mu;
    std::set<std::pair<int64_t, int64_t>> chunks;
    parallel_for(1003, 100, [&](int64_t b, int64_t e) {
      std::lock_guard<std::mutex> lock(mu);
      chunks.insert({b, e});
    });
    return chunks;
  };
  auto one = chunks_for(1);
  auto four = chunks_for(4);
  set_thread_count(1);
  CHECK(one == four);
  CHECK(one.size() == 11);  // ceil(1003 / 100)
  CHECK(one.rbegin()->second == 1003);
}

TEST_CASE("disjoint writes give identical buffers across thread counts") {
  auto fill = [](int threads) {
    set_thread_count(threads);
    std::vector<double> out(5000);
    parallel_for(5000, 128, [&](int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i)
        out[size_t(i)] = double(i) * 1.000000119 + 0.25 * double(i % 7);
    });
    return out;
  };
  auto ref = fill(1);
  auto par = fill(6);
  set_thread_count(1);
  CHECK(std::memcmp(ref.data(), par.data(), ref.size() * sizeof(double)) == 0);
}

TEST_CASE("exceptions inside chunks propagate to the caller") {
  set_thread_count(4);
  CHECK_THROWS_AS(parallel_for(100, 10,
                               [](int64_t b, int64_t) {
                                 if (b >= 50) noderf::fail("boom at ", b);
                               }),
                  noderf::Error);
  set_thread_count(1);
  // The pool must still be usable after a failed run.
  std::vector<int> ok(10, 0);
  parallel_for(10, 1, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) ok[size_t(i)] = 1;
  });
  for (int v : ok) CHECK(v == 1);
}

TEST_SUITE_END();
