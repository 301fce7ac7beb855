// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/nn.hpp"

#include <cmath>

#include "noderf/common.hpp"

namespace noderf::nn {

using grad::add;
using grad::divide;
using grad::matmul;
using grad::mul;
using grad::relu;
using grad::sigmoid;
using grad::softplus;
using grad::sub;
using grad::transpose;

Tensor positional_encode(const Tensor& x, int L) {
  require(x.defined(), "positional_encode: undefined input");
  require(!x.on_tape(), "positional_encode: taped inputs are not supported");
  require(L >= 1, "positional_encode: L must be at least 1, got ", L);
  require(x.rank() == 1 || x.rank() == 2, "positional_encode: expects rank 1 or 2, got ",
          grad::shape_str(x.shape()));
  const int64_t n = x.rank() == 2 ? x.dim(0) : 1;
  const int64_t d = x.rank() == 2 ? x.dim(1) : x.dim(0);
  const int64_t w = 2 * int64_t(L) * d;
  std::vector<double> out(size_t(n * w));
  const double* in = x.ptr();
  for (int64_t r = 0; r < n; ++r) {
    double* row = out.data() + r * w;
    for (int64_t j = 0; j < d; ++j) {
      const double v = in[r * d + j];
      for (int k = 0; k < L; ++k) {
        const double arg = std::ldexp(M_PI, k) * v;
        *row++ = std::sin(arg);
        *row++ = std::cos(arg);
      }
    }
  }
  Shape shape = x.rank() == 2 ? Shape{n, w} : Shape{w};
  return Tensor(std::move(shape), std::move(out));
}

// ---------------------------------------------------------------------------
// Param

Param::Param(std::string name, Tensor value)
    : name_(std::move(name)), value_(std::move(value)) {
  require(value_.defined(), "Param ", name_, ": undefined value");
  require(!value_.on_tape(), "Param ", name_, ": value must be off-tape");
}

std::vector<double>& Param::mutable_value() { return value_.mutable_data(); }

void Param::assign(Tensor value) {
  require(value.defined(), "Param ", name_, ": undefined value");
  if (value_.defined())
    require(value.shape() == value_.shape(), "Param ", name_, ": shape changed from ",
            grad::shape_str(value_.shape()), " to ", grad::shape_str(value.shape()));
  value_ = value.detached().clone();
  binding_tape_id_ = 0;
  binding_ = Tensor();
}

Tensor Param::on(Tape& tape) {
  if (binding_tape_id_ == tape.id() && binding_.defined() &&
      binding_.epoch() == tape.epoch() && bound_frozen_ == frozen_)
    return binding_;
  binding_ = frozen_ ? tape.constant(value_) : tape.leaf(value_);
  binding_tape_id_ = tape.id();
  bound_frozen_ = frozen_;
  return binding_;
}

bool Param::reached_by(const GradMap& grads) const {
  if (!binding_.defined() || bound_frozen_) return false;
  if (binding_.epoch() != grads.epoch()) return false;
  return grads.nonzero(binding_);
}

// ---------------------------------------------------------------------------
// Layers

Tensor apply_act(const Tensor& x, Act act) {
  switch (act) {
    case Act::kNone: return x;
    case Act::kRelu: return relu(x);
    case Act::kTanh: return grad::tanh(x);
  }
  fail("apply_act: unknown activation");
}

Tensor affine(Tape* tape, Param& w, Param& b, const Tensor& x) {
  Tensor wv = tape ? w.on(*tape) : w.value();
  Tensor bv = tape ? b.on(*tape) : b.value();
  return add(matmul(x, transpose(wv)), bv);
}

Tensor lipschitz_normalize(const Tensor& w, const Tensor& c) {
  require(w.defined() && w.rank() == 2, "lipschitz_normalize: weight must be rank-2");
  require(c.defined() && c.size() == 1, "lipschitz_normalize: bound must be a scalar");
  const int64_t out = w.dim(0), in = w.dim(1);
  Tensor row_l1 = matmul(grad::abs(w), Tensor::full({in, 1}, 1.0));
  Tensor ratio = divide(softplus(c), row_l1);
  // min(ratio, 1), expressed with relu so it stays on the graph.
  Tensor capped = sub(ratio, relu(sub(ratio, Tensor::full({out, 1}, 1.0))));
  Tensor scale_mat = matmul(capped, Tensor::full({1, in}, 1.0));
  return mul(scale_mat, w);
}

Tensor lipschitz_loss(const std::vector<Tensor>& cs) {
  require(!cs.empty(), "lipschitz_loss: needs at least one bound");
  Tensor acc = softplus(cs[0]);
  for (size_t i = 1; i < cs.size(); ++i) acc = mul(acc, softplus(cs[i]));
  return acc;
}

Tensor uniform_init(Rng& rng, int64_t out, int64_t in) {
  require(out > 0 && in > 0, "uniform_init: widths must be positive, got ", out, " x ", in);
  const double s = 1.0 / std::sqrt(double(in));
  return Tensor({out, in}, rng.uniform_vec(out * in, -s, s));
}

namespace {

Tensor bias_init(Rng& rng, int64_t out, int64_t fan_in) {
  const double s = 1.0 / std::sqrt(double(fan_in));
  return Tensor({out}, rng.uniform_vec(out, -s, s));
}

// Inverse softplus, so a bound can start exactly at a chosen value.
double softplus_inv(double y) {
  require(y > 0.0, "softplus_inv: needs a positive target, got ", y);
  return std::log(std::expm1(y));
}

double max_row_l1(const Tensor& w) {
  double best = 0.0;
  for (int64_t r = 0; r < w.dim(0); ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < w.dim(1); ++j) s += std::abs(w[r * w.dim(1) + j]);
    best = std::max(best, s);
  }
  return best;
}

}  // namespace

Mlp::Mlp(std::string name, MlpConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  require(cfg_.widths.size() >= 2, "Mlp ", name, ": needs at least one layer");
  for (int64_t w : cfg_.widths)
    require(w > 0, "Mlp ", name, ": widths must be positive");
  layers_.resize(cfg_.widths.size() - 1);
  for (size_t i = 0; i < layers_.size(); ++i) {
    const int64_t in = cfg_.widths[i], out = cfg_.widths[i + 1];
    const std::string base = name + ".l" + std::to_string(i);
    layers_[i].w = Param(base + ".w", uniform_init(rng, out, in));
    layers_[i].b = Param(base + ".b", bias_init(rng, out, in));
    if (cfg_.lipschitz) {
      // Start with the bound exactly at the layer's initial operator norm so
      // normalization is inactive at step 0 and only tightens if trained to.
      const double c0 = softplus_inv(max_row_l1(layers_[i].w.value()));
      layers_[i].c = Param(base + ".c", Tensor::scalar(c0));
    }
  }
}

Tensor Mlp::forward(Tape* tape, const Tensor& x) {
  require(x.defined() && x.rank() == 2, "Mlp::forward: expects a [batch, features] input");
  require(x.dim(1) == in_width(), "Mlp::forward: input width ", x.dim(1),
          " does not match first layer width ", in_width());
  Tensor h = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    Layer& layer = layers_[i];
    Tensor w = tape ? layer.w.on(*tape) : layer.w.value();
    if (cfg_.lipschitz) {
      Tensor c = tape ? layer.c.on(*tape) : layer.c.value();
      w = lipschitz_normalize(w, c);
    }
    Tensor b = tape ? layer.b.on(*tape) : layer.b.value();
    h = add(matmul(h, transpose(w)), b);
    h = apply_act(h, i + 1 == layers_.size() ? cfg_.output : cfg_.hidden);
  }
  return h;
}

std::vector<Param*> Mlp::params() {
  std::vector<Param*> out;
  for (Layer& layer : layers_) {
    out.push_back(&layer.w);
    out.push_back(&layer.b);
    if (cfg_.lipschitz) out.push_back(&layer.c);
  }
  return out;
}

std::vector<Param*> Mlp::bounds() {
  std::vector<Param*> out;
  if (!cfg_.lipschitz) return out;
  for (Layer& layer : layers_) out.push_back(&layer.c);
  return out;
}

Tensor Mlp::bound_product(Tape* tape) {
  require(cfg_.lipschitz, "Mlp::bound_product: net is not lipschitz-normalized");
  std::vector<Tensor> cs;
  for (Layer& layer : layers_)
    cs.push_back(tape ? layer.c.on(*tape) : layer.c.value());
  return lipschitz_loss(cs);
}

// ---------------------------------------------------------------------------
// GRU

GruCell::GruCell(std::string name, int64_t input, int64_t hidden, Rng& rng)
    : input_(input), hidden_(hidden) {
  require(input > 0 && hidden > 0, "GruCell ", name, ": sizes must be positive");
  auto make = [&](const char* suffix, int64_t out, int64_t in, Param& p) {
    p = Param(name + "." + suffix, uniform_init(rng, out, in));
  };
  make("wz", hidden, input, wz_);
  make("uz", hidden, hidden, uz_);
  bz_ = Param(name + ".bz", bias_init(rng, hidden, hidden));
  make("wr", hidden, input, wr_);
  make("ur", hidden, hidden, ur_);
  br_ = Param(name + ".br", bias_init(rng, hidden, hidden));
  make("wg", hidden, input, wg_);
  make("ug", hidden, hidden, ug_);
  bg_ = Param(name + ".bg", bias_init(rng, hidden, hidden));
}

Tensor GruCell::step(Tape* tape, const Tensor& h, const Tensor& x) {
  require(h.defined() && h.rank() == 2 && h.dim(1) == hidden_,
          "GruCell::step: hidden shape mismatch");
  require(x.defined() && x.rank() == 2 && x.dim(1) == input_,
          "GruCell::step: input shape mismatch");
  require(h.dim(0) == x.dim(0), "GruCell::step: batch sizes differ");
  auto get = [&](Param& p) { return tape ? p.on(*tape) : p.value(); };
  Tensor z = sigmoid(add(add(matmul(x, transpose(get(wz_))), matmul(h, transpose(get(uz_)))),
                         get(bz_)));
  Tensor r = sigmoid(add(add(matmul(x, transpose(get(wr_))), matmul(h, transpose(get(ur_)))),
                         get(br_)));
  Tensor g = grad::tanh(add(
      add(matmul(x, transpose(get(wg_))), matmul(mul(r, h), transpose(get(ug_)))), get(bg_)));
  Tensor one = Tensor::full({h.dim(0), hidden_}, 1.0);
  return add(mul(z, h), mul(sub(one, z), g));
}

std::vector<Param*> GruCell::params() {
  return {&wz_, &uz_, &bz_, &wr_, &ur_, &br_, &wg_, &ug_, &bg_};
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(const std::vector<Param*>& params, const GradMap& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (Param* p : params) {
    if (p == nullptr || p->frozen() || !p->reached_by(grads)) continue;
    Tensor g = grads.wrt(p->binding());
    if (!p->moment1().defined()) {
      p->moment1() = Tensor::zeros(p->value().shape());
      p->moment2() = Tensor::zeros(p->value().shape());
    }
    std::vector<double>& theta = p->mutable_value();
    std::vector<double>& m = p->moment1().mutable_data();
    std::vector<double>& v = p->moment2().mutable_data();
    const double* gp = g.ptr();
    for (size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gp[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gp[i] * gp[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      theta[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

}  // namespace noderf::nn
