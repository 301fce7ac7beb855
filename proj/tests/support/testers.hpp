// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "noderf/nn.hpp"
#include "noderf/tensor.hpp"

namespace noderf::testing {

inline bool bits_equal(const grad::Tensor& a, const grad::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.ptr(), b.ptr(), size_t(a.size()) * sizeof(double)) == 0;
}

// Central-difference check for module-owned parameters. `loss_fn` builds the
// scalar loss on the given tape, reading current Param values through the
// modules; with a null tape it evaluates the same program in value mode.
// Returns the max over components of |analytic - central| / max(|analytic|,
// 1e-12). Unreached params count with analytic gradient zero.
inline double module_fd_check(const std::function<grad::Tensor(grad::Tape*)>& loss_fn,
                              const std::vector<nn::Param*>& params, double h) {
  grad::Tape tape;
  grad::Tensor loss = loss_fn(&tape);
  grad::GradMap grads = tape.backward(loss);
  std::vector<grad::Tensor> analytic;
  analytic.reserve(params.size());
  for (nn::Param* p : params)
    analytic.push_back(p->reached_by(grads) ? grads.wrt(p->binding())
                                            : grad::Tensor::zeros(p->value().shape()));
  double max_rel = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    std::vector<double>& v = params[i]->mutable_value();
    for (size_t j = 0; j < v.size(); ++j) {
      const double saved = v[j];
      v[j] = saved + h;
      const double lp = loss_fn(nullptr).item();
      v[j] = saved - h;
      const double lm = loss_fn(nullptr).item();
      v[j] = saved;
      const double central = (lp - lm) / (2.0 * h);
      const double a = analytic[i][int64_t(j)];
      const double rel = std::abs(a - central) / std::max(std::abs(a), 1e-12);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace noderf::testing
