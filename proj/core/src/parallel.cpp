// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "noderf/common.hpp"

namespace noderf {
namespace {

// A small rendezvous pool: workers sleep until a parallel_for posts work,
// grab chunk indices from a shared counter, and go back to sleep. The caller
// participates too, so thread_count == 1 never touches the pool.
class Pool {
 public:
  explicit Pool(int workers) {
    threads_.reserve(size_t(workers));
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::unique_lock lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(int64_t n_chunks, int64_t chunk, int64_t n,
           const std::function<void(int64_t, int64_t)>& fn) {
    {
      std::unique_lock lk(mu_);
      fn_ = &fn;
      chunk_ = chunk;
      n_ = n;
      next_.store(0, std::memory_order_relaxed);
      pending_ = n_chunks;
      generation_++;
    }
    cv_.notify_all();
    drain(n_chunks);
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    fn_ = nullptr;
    if (error_) {
      auto e = error_;
      error_ = nullptr;
      std::rethrow_exception(e);
    }
  }

 private:
  void drain(int64_t n_chunks) {
    for (;;) {
      const int64_t c = next_.fetch_add(1, std::memory_order_relaxed);
      if (c >= n_chunks) break;
      run_chunk(c);
    }
  }

  void run_chunk(int64_t c) {
    const int64_t b = c * chunk_;
    const int64_t e = std::min(n_, b + chunk_);
    try {
      (*fn_)(b, e);
    } catch (...) {
      std::unique_lock lk(mu_);
      if (!error_) error_ = std::current_exception();
    }
    std::unique_lock lk(mu_);
    if (--pending_ == 0) done_cv_.notify_all();
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      const int64_t n_chunks = (n_ + chunk_ - 1) / chunk_;
      for (;;) {
        const int64_t c = next_.fetch_add(1, std::memory_order_relaxed);
        if (c >= n_chunks) break;
        run_chunk(c);
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> threads_;
  const std::function<void(int64_t, int64_t)>* fn_ = nullptr;
  int64_t chunk_ = 1, n_ = 0, pending_ = 0;
  std::atomic<int64_t> next_{0};
  uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

int g_threads = 1;
Pool* g_pool = nullptr;
std::mutex g_pool_mu;

}  // namespace

void set_thread_count(int n) {
  require(n >= 1, "set_thread_count: need n >= 1, got ", n);
  std::unique_lock lk(g_pool_mu);
  if (n == g_threads) return;
  delete g_pool;
  g_pool = nullptr;
  g_threads = n;
}

int thread_count() { return g_threads; }

void parallel_for(int64_t n, int64_t chunk_size,
                  const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  require(chunk_size > 0, "parallel_for: chunk_size must be positive");
  const int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
  if (g_threads == 1 || n_chunks == 1) {
    for (int64_t c = 0; c < n_chunks; ++c) {
      const int64_t b = c * chunk_size;
      fn(b, std::min(n, b + chunk_size));
    }
    return;
  }
  std::unique_lock lk(g_pool_mu);
  if (!g_pool) g_pool = new Pool(g_threads - 1);
  g_pool->run(n_chunks, chunk_size, n, fn);
}

}  // namespace noderf
