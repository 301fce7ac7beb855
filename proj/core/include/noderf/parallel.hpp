// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace noderf {

// Worker threads used by data-parallel kernels. Count is global and >= 1;
// 1 means run inline on the calling thread.
void set_thread_count(int n);
int thread_count();

// Calls fn(begin, end) for consecutive chunks of [0, n). The chunk grid is a
// function of n and chunk_size only, never of the thread count, and callers
// must write disjoint outputs per chunk; together this makes every result
// bit-identical no matter how many threads execute it.
void parallel_for(int64_t n, int64_t chunk_size,
                  const std::function<void(int64_t, int64_t)>& fn);

}  // namespace noderf
