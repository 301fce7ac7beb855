// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "noderf/rng.hpp"
#include "noderf/tensor.hpp"

namespace {

using namespace noderf::grad;

void BM_Matmul(benchmark::State& state) {
  int64_t n = state.range(0);
  noderf::Rng rng(1);
  Tensor a({n, n}, rng.uniform_vec(n * n, -1.0, 1.0));
  Tensor b({n, n}, rng.uniform_vec(n * n, -1.0, 1.0));
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.ptr());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

void BM_MlpBackward(benchmark::State& state) {
  int64_t batch = state.range(0);
  noderf::Rng rng(2);
  Tensor w1({64, 64}, rng.uniform_vec(64 * 64, -0.1, 0.1));
  Tensor b1({64}, rng.uniform_vec(64, -0.1, 0.1));
  Tensor w2({1, 64}, rng.uniform_vec(64, -0.1, 0.1));
  Tensor x({batch, 64}, rng.uniform_vec(batch * 64, -1.0, 1.0));
  for (auto _ : state) {
    Tape tape;
    Tensor p1 = tape.leaf(w1);
    Tensor p2 = tape.leaf(b1);
    Tensor p3 = tape.leaf(w2);
    Tensor h = tanh(add(matmul(tape.constant(x), transpose(p1)), p2));
    Tensor loss = mean(square(matmul(h, transpose(p3))));
    GradMap grads = tape.backward(loss);
    benchmark::DoNotOptimize(grads.wrt(p1).ptr());
  }
}
BENCHMARK(BM_MlpBackward)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
