// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "noderf/rng.hpp"
#include "noderf/tensor.hpp"

namespace noderf::nn {

using grad::GradMap;
using grad::Shape;
using grad::Tape;
using grad::Tensor;

// Frequency-basis encoding: for each coordinate x_j and each k < L emits
// (sin(2^k pi x_j), cos(2^k pi x_j)), so a [n, d] input maps to [n, 2*L*d]
// (rank-1 inputs map to rank-1 outputs). Plain values only: nothing in this
// artifact differentiates through an encoding, so taped inputs are rejected.
Tensor positional_encode(const Tensor& x, int L);

// A named trainable array. `on(tape)` binds the current value into the graph
// and caches the handle for the tape's current epoch, so every use within one
// iteration shares a single leaf; without the cache, gradients would split
// across duplicate leaves and the optimizer would see only one shard.
// Frozen params bind as constants: they participate in the forward pass but
// receive no gradient, and the optimizer skips them.
class Param {
 public:
  Param() = default;
  Param(std::string name, Tensor value);

  const std::string& name() const { return name_; }
  const Tensor& value() const { return value_; }
  // In-place update of the master copy. Only call between iterations (after
  // backward), never while a live graph references the buffer.
  std::vector<double>& mutable_value();
  void assign(Tensor value);

  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  Tensor on(Tape& tape);
  // True when this param was bound as a trainable leaf in the graph that
  // produced `grads` and a gradient actually reached it.
  bool reached_by(const GradMap& grads) const;
  const Tensor& binding() const { return binding_; }

  // Adam moment buffers; owned here so optimizer state travels with the
  // parameter. Allocated on first use.
  Tensor& moment1() { return m_; }
  Tensor& moment2() { return v_; }

 private:
  std::string name_;
  Tensor value_;
  bool frozen_ = false;
  bool bound_frozen_ = false;
  uint64_t binding_tape_id_ = 0;
  Tensor binding_;
  Tensor m_, v_;
};

enum class Act : uint8_t { kNone, kRelu, kTanh };

Tensor apply_act(const Tensor& x, Act act);

// y = x * W^T + b for batched rows: x [n, in], W [out, in], b [out].
// `tape` may be null for value-mode inference (no graph recorded).
Tensor affine(Tape* tape, Param& w, Param& b, const Tensor& x);

// Row-wise Lipschitz weight normalization: each row r of W is scaled by
// min(1, softplus(c) / ||r||_1), bounding the layer's operator norm w.r.t.
// the infinity norm by softplus(c). Differentiable in W and c; rows whose
// norm is already within the bound (including zero rows, via the guarded
// divide) pass through unchanged.
Tensor lipschitz_normalize(const Tensor& w, const Tensor& c);

// Product of softplus(c_i) over layers, the trainable-bound regularizer.
Tensor lipschitz_loss(const std::vector<Tensor>& cs);

struct MlpConfig {
  std::vector<int64_t> widths;  // [in, hidden..., out]; at least one layer
  Act hidden = Act::kRelu;
  Act output = Act::kNone;
  bool lipschitz = false;
};

// Affine + activation stack. With `lipschitz` set, every layer's effective
// weight is the normalized one and carries a trainable bound scalar c.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, MlpConfig cfg, Rng& rng);

  Tensor forward(Tape* tape, const Tensor& x);
  std::vector<Param*> params();
  // The c scalars, in layer order; empty unless configured lipschitz.
  std::vector<Param*> bounds();
  // Taped/value-mode softplus(c) product over this net's layers.
  Tensor bound_product(Tape* tape);
  const MlpConfig& config() const { return cfg_; }
  int64_t in_width() const { return cfg_.widths.front(); }
  int64_t out_width() const { return cfg_.widths.back(); }

 private:
  struct Layer {
    Param w, b, c;
  };
  MlpConfig cfg_;
  std::vector<Layer> layers_;
};

// Gated recurrent unit with the carry convention h' = z (.) h + (1-z) (.) g
// where z is the update gate and g the tanh candidate; a saturated update
// gate therefore preserves the hidden state.
class GruCell {
 public:
  GruCell() = default;
  GruCell(std::string name, int64_t input, int64_t hidden, Rng& rng);

  Tensor step(Tape* tape, const Tensor& h, const Tensor& x);
  std::vector<Param*> params();
  int64_t hidden_size() const { return hidden_; }
  int64_t input_size() const { return input_; }

 private:
  int64_t input_ = 0, hidden_ = 0;
  Param wz_, uz_, bz_;
  Param wr_, ur_, br_;
  Param wg_, ug_, bg_;
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. One step() per iteration over the full param list;
// frozen params and params the loss never reached are left untouched
// (moments included). All arithmetic is sequential and deterministic.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<Param*>& params, const GradMap& grads);
  int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// Fan-in-scaled uniform init, entries in +-1/sqrt(in).
Tensor uniform_init(Rng& rng, int64_t out, int64_t in);

}  // namespace noderf::nn
