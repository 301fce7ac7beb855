// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/ode.hpp"

#include <cmath>

#include "noderf/common.hpp"

namespace noderf::ode {

using grad::add;
using grad::scale;

namespace {

// Requested times this close to a grid point are treated as on the grid.
constexpr double kSnap = 1e-9;

void validate(const Tensor& h0, const std::vector<double>& times,
              const SolverConfig& config) {
  require(h0.defined(), "ode_solve: undefined initial state");
  require(!times.empty(), "ode_solve: empty time list");
  for (size_t i = 1; i < times.size(); ++i)
    require(times[i] > times[i - 1], "ode_solve: times must be strictly increasing (",
            times[i - 1], " then ", times[i], ")");
  require(config.step > 0.0, "ode_solve: step must be positive");
  require(config.atol > 0.0 && config.rtol > 0.0,
          "ode_solve: tolerances must be positive");
  require(config.max_steps >= 1, "ode_solve: max_steps must be at least 1");
}

Trajectory solve_euler(const Rhs& f, const Tensor& h0, const std::vector<double>& times,
                       const SolverConfig& config, Tape* tape) {
  Trajectory out;
  out.times = times;
  out.states.reserve(times.size());
  out.states.push_back(h0);

  const double t0 = times[0];
  const double step = config.step;
  // The integration chain lives on the global grid t0 + i * step regardless
  // of which times are requested. A requested time between grid points is
  // served by a shortened probe step branching off the chain; the chain
  // itself resumes from the grid point, so refining the request list never
  // changes states at shared times.
  int64_t grid = 0;
  double t_cur = t0;
  Tensor h = h0;
  int64_t taken = 0;
  for (size_t seg = 1; seg < times.size(); ++seg) {
    const double target = times[seg];
    double grid_next = t0 + double(grid + 1) * step;
    while (grid_next < target - kSnap) {
      require(++taken <= config.max_steps, "ode_solve: max_steps (", config.max_steps,
              ") exceeded at t=", t_cur);
      h = add(h, scale(f(tape, h, t_cur), grid_next - t_cur));
      t_cur = grid_next;
      ++grid;
      grid_next = t0 + double(grid + 1) * step;
    }
    if (grid_next <= target + kSnap) {
      // The target sits on the grid: the landing step is the grid step.
      require(++taken <= config.max_steps, "ode_solve: max_steps (", config.max_steps,
              ") exceeded at t=", t_cur);
      const double dt = target - t_cur;
      if (dt > 0.0) h = add(h, scale(f(tape, h, t_cur), dt));
      t_cur = target;
      ++grid;
      out.states.push_back(h);
    } else if (target > t_cur + kSnap) {
      // Probe step off the chain; the chain state stays at the grid point.
      require(++taken <= config.max_steps, "ode_solve: max_steps (", config.max_steps,
              ") exceeded at t=", t_cur);
      out.states.push_back(add(h, scale(f(tape, h, t_cur), target - t_cur)));
    } else {
      // The target coincides with the current grid point (t_cur snapped).
      out.states.push_back(h);
    }
  }
  return out;
}

// Dormand-Prince 5(4) tableau (7 stages, first-same-as-last).
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[7] = {35.0 / 384,     0.0,        500.0 / 1113, 125.0 / 192,
                           -2187.0 / 6784, 11.0 / 84,  0.0};
constexpr double kB4[7] = {5179.0 / 57600,    0.0,          7571.0 / 16695, 393.0 / 640,
                           -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

double inf_norm(const Tensor& t) {
  double m = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

// One Dormand-Prince step from (t, y) with size dt. The stage order and the
// sequence of add/scale ops are fixed, so a taped replay of a step planned in
// value mode reproduces it bit-for-bit. Returns the 5th-order state; the
// embedded 4th-order error estimate is written to err_out when non-null.
Tensor dopri5_step(const Rhs& f, Tape* tape, const Tensor& y, double t, double dt,
                   double* err_out) {
  Tensor k[7];
  k[0] = f(tape, y, t);
  for (int i = 1; i < 7; ++i) {
    Tensor yi = y;
    for (int j = 0; j < i; ++j)
      if (kA[i][j] != 0.0) yi = add(yi, scale(k[j], dt * kA[i][j]));
    k[i] = f(tape, yi, t + kC[i] * dt);
  }
  Tensor next = y;
  for (int j = 0; j < 7; ++j)
    if (kB5[j] != 0.0) next = add(next, scale(k[j], dt * kB5[j]));
  if (err_out != nullptr) {
    Tensor err;
    bool first = true;
    for (int j = 0; j < 7; ++j) {
      const double d = kB5[j] - kB4[j];
      if (d == 0.0) continue;
      Tensor term = scale(k[j], dt * d);
      err = first ? term : add(err, term);
      first = false;
    }
    *err_out = inf_norm(err);
  }
  return next;
}

struct PlannedStep {
  double t, dt;
};

// Adaptive value-mode pass: plans the accepted-step schedule per requested
// segment and returns the value-mode states at requested times.
std::vector<std::vector<PlannedStep>> plan_dopri5(const Rhs& f, const Tensor& h0,
                                                  const std::vector<double>& times,
                                                  const SolverConfig& config,
                                                  std::vector<Tensor>* states_out,
                                                  std::vector<StepStat>* stats) {
  std::vector<std::vector<PlannedStep>> plan(times.size() - 1);
  Tensor y = h0.detached();
  double t = times[0];
  states_out->push_back(y);
  double h_ctrl = 0.01 * (times.back() - times.front());
  int64_t attempts = 0;
  for (size_t seg = 1; seg < times.size(); ++seg) {
    const double target = times[seg];
    while (t < target - kSnap) {
      require(++attempts <= config.max_steps, "ode_solve: max_steps (", config.max_steps,
              ") exceeded at t=", t,
              " (stiff or diverging dynamics for the requested tolerances)");
      const bool clipped = t + h_ctrl >= target;
      const double dt = clipped ? target - t : h_ctrl;
      double err = 0.0;
      Tensor candidate = dopri5_step(f, nullptr, y, t, dt, &err);
      const double tol = config.atol + config.rtol * inf_norm(y);
      double factor = err > 0.0 ? 0.9 * std::pow(tol / err, 0.2) : 5.0;
      factor = std::min(5.0, std::max(0.2, factor));
      if (err <= tol) {
        plan[seg - 1].push_back({t, dt});
        stats->push_back({err, tol});
        y = candidate;
        t = clipped ? target : t + dt;
        // Clipped landing steps leave the controller's step size alone.
        if (!clipped) h_ctrl = dt * factor;
      } else {
        h_ctrl = dt * factor;
      }
    }
    t = target;
    states_out->push_back(y);
  }
  return plan;
}

Trajectory solve_dopri5(const Rhs& f, const Tensor& h0, const std::vector<double>& times,
                        const SolverConfig& config, Tape* tape) {
  Trajectory out;
  out.times = times;
  std::vector<Tensor> value_states;
  std::vector<std::vector<PlannedStep>> plan =
      plan_dopri5(f, h0, times, config, &value_states, &out.step_stats);
  if (tape == nullptr) {
    out.states = std::move(value_states);
    out.states[0] = h0;
    return out;
  }
  // Taped replay of the frozen schedule; stage arithmetic matches the plan,
  // so recorded values equal the planned ones bit-for-bit.
  Tensor y = h0;
  out.states.push_back(y);
  for (const std::vector<PlannedStep>& seg : plan) {
    for (const PlannedStep& s : seg) y = dopri5_step(f, tape, y, s.t, s.dt, nullptr);
    out.states.push_back(y);
  }
  return out;
}

}  // namespace

Trajectory ode_solve(const Rhs& f, const Tensor& h0, const std::vector<double>& times,
                     const SolverConfig& config, Tape* tape) {
  validate(h0, times, config);
  if (times.size() == 1) {
    Trajectory out;
    out.times = times;
    out.states.push_back(h0);
    return out;
  }
  switch (config.kind) {
    case SolverKind::kEuler: return solve_euler(f, h0, times, config, tape);
    case SolverKind::kDopri5: return solve_dopri5(f, h0, times, config, tape);
  }
  fail("ode_solve: unknown solver kind");
}

Tensor MlpRhs::operator()(Tape* tape, const Tensor& h, double t) const {
  require(h.defined() && h.rank() == 2, "MlpRhs: state must be [batch, dim]");
  const int64_t dim = h.dim(1);
  require(mlp_->in_width() == dim + 1, "MlpRhs: mlp expects width ", mlp_->in_width(),
          " but state has dim ", dim);
  require(mlp_->out_width() == dim, "MlpRhs: mlp output width ", mlp_->out_width(),
          " does not match state dim ", dim);
  Tensor t_col = Tensor::full({h.dim(0), 1}, t);
  return mlp_->forward(tape, grad::concat({h, t_col}));
}

}  // namespace noderf::ode
