// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "noderf/nn.hpp"
#include "noderf/tensor.hpp"

namespace noderf::ode {

using grad::Tape;
using grad::Tensor;

// Right-hand side dh/dt = f(h, t). `tape` is null for value-mode evaluation;
// implementations must produce bit-identical values either way, since the
// adaptive solver plans steps in value mode and replays them on the tape.
using Rhs = std::function<Tensor(Tape*, const Tensor&, double)>;

enum class SolverKind : uint8_t { kEuler, kDopri5 };

struct SolverConfig {
  SolverKind kind = SolverKind::kDopri5;
  double step = 0.05;    // euler step size
  double atol = 1e-3;
  double rtol = 1e-4;
  int64_t max_steps = 100000;
};

// Error estimate and tolerance of one accepted adaptive step.
struct StepStat {
  double err = 0.0;
  double tol = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Tensor> states;        // states[0] is the initial state
  std::vector<StepStat> step_stats;  // dopri5 accepted steps, in order
};

// Integrates h' = f(h, t) from times[0], recording states at every requested
// time. Requested times must be strictly increasing.
//
// euler: steps lie on the global grid times[0] + i * step, independent of
// which intermediate times are requested (a shortened landing step is taken
// to each requested time, then integration resumes from the grid), so
// refining the requested-time list never changes shared states. dopri5: the
// standard 7-stage first-same-as-last embedded pair; a step is accepted when
// the embedded error estimate err <= atol + rtol * ||h||_inf, and the next
// step scales by 0.9 * (tol/err)^(1/5), clamped to [0.2, 5]; steps are
// clipped to land exactly on requested times.
//
// With a tape, the integration is recorded and gradients are the exact
// derivatives of the discretized computation; dopri5 first plans its step
// schedule in value mode and then replays it on the tape, so the step-size
// controller is frozen (treated as non-differentiable).
Trajectory ode_solve(const Rhs& f, const Tensor& h0, const std::vector<double>& times,
                     const SolverConfig& config, Tape* tape);

// Wraps an MLP (first layer width = state width + 1) as dh/dt = mlp(h ++ t).
class MlpRhs {
 public:
  explicit MlpRhs(nn::Mlp* mlp) : mlp_(mlp) {}
  Tensor operator()(Tape* tape, const Tensor& h, double t) const;

 private:
  nn::Mlp* mlp_;
};

}  // namespace noderf::ode
