// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "noderf/common.hpp"

namespace noderf::grad {

// Shapes are lists of positive extents; tensors are dense, row-major, f64.
using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

enum class Op : uint8_t {
  kLeaf, kConst,
  kMatmul, kTranspose,
  kAdd, kSub, kMul, kDiv, kScale,
  kConcat, kSlice, kReshape,
  kSum, kMean, kL2Sq, kCumsumEx,
  kRelu, kTanh, kSigmoid, kSoftplus, kExp, kLog, kSquare, kAbs,
};

// Dense 64-bit float tensor. Copies share the underlying buffer and ops never
// mutate their inputs, so sharing is safe. A tensor may additionally carry a
// node handle into a Tape, in which case gradients can flow through it; a
// tensor belongs to at most one graph at a time.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v) { return full({1}, v); }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t size() const { return data_ ? int64_t(data_->size()) : 0; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  int64_t rank() const { return int64_t(shape_.size()); }

  const std::vector<double>& data() const;
  const double* ptr() const { return data().data(); }
  double operator[](int64_t i) const { return data()[size_t(i)]; }
  // Value of a single-element tensor.
  double item() const;

  // In-place access; only allowed off-tape so recorded graphs stay immutable.
  std::vector<double>& mutable_data();
  // Same buffer, no tape handle.
  Tensor detached() const;
  // Fresh buffer, no tape handle.
  Tensor clone() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int32_t node() const { return node_; }
  uint64_t epoch() const { return epoch_; }

 private:
  friend class Tape;
  std::shared_ptr<std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int32_t node_ = -1;
  uint64_t epoch_ = 0;
};

struct Node {
  Op op = Op::kLeaf;
  std::vector<int32_t> in;
  Tensor value;
  double a0 = 0.0;        // scale factor
  int64_t i0 = 0, i1 = 0; // slice start / length
  bool requires_grad = false;
};

// Result of Tape::backward. Gradients are keyed by the leaf tensors that were
// registered on the consumed graph; leaves the loss never reached (and frozen
// constants) read back as exact zeros.
class GradMap {
 public:
  Tensor wrt(const Tensor& leaf) const;
  bool nonzero(const Tensor& leaf) const;
  uint64_t epoch() const { return epoch_; }

 private:
  friend class Tape;
  const Tensor* find(const Tensor& leaf) const;
  uint64_t epoch_ = 0;
  // Sorted by node id. `shapes_` covers every leaf/const so zero reads work.
  std::vector<std::pair<int32_t, Tensor>> grads_;
  std::vector<std::pair<int32_t, Shape>> shapes_;
};

// Append-only define-by-run graph. Built fresh every iteration; backward
// walks it once in reverse insertion order and then resets it. Replaying the
// same program on a fresh tape is bit-identical.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Process-unique, so caches keyed by tape identity can tell two tapes
  // apart even when one reuses the other's address.
  uint64_t id() const { return id_; }

  // Registers a trainable input. Gradients accumulate to it.
  Tensor leaf(const Tensor& value);
  // Registers a non-trainable input; backward treats it as a constant.
  Tensor constant(const Tensor& value);

  // Reverse-mode sweep from a scalar loss. The graph is reset afterwards;
  // tensors recorded on it become detached.
  GradMap backward(const Tensor& loss);

  void reset();
  int64_t node_count() const { return int64_t(nodes_.size()); }
  uint64_t epoch() const { return epoch_; }
  const Node& node_at(int32_t id) const { return nodes_.at(size_t(id)); }

  // Internal: used by the op implementations.
  Tensor record(Op op, const std::vector<Tensor>& inputs, Tensor value,
                double a0 = 0.0, int64_t i0 = 0, int64_t i1 = 0);

 private:
  int32_t intern_input(const Tensor& t);
  uint64_t id_ = 0;
  std::vector<Node> nodes_;
  uint64_t epoch_ = 1;
};

// Ops. Mixing inputs from two different live tapes is an error; plain-value
// inputs are recorded as constants. If no input is on a tape the result is a
// plain value (inference mode shares these exact kernels).
Tensor matmul(const Tensor& a, const Tensor& b);      // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                    // rank-2
Tensor add(const Tensor& a, const Tensor& b);         // leading-axis broadcast
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);      // guarded denominator
Tensor scale(const Tensor& a, double s);
Tensor concat(const std::vector<Tensor>& parts);      // along last axis
Tensor slice_last(const Tensor& a, int64_t start, int64_t len);
Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);                          // full reduction, [1]
Tensor mean(const Tensor& a);
Tensor l2_squared(const Tensor& a);
Tensor cumsum_exclusive_last(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);                     // log1p(exp(-|x|)) + max(x, 0)
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);                          // guarded at kLogEps
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// Guard floors for divide/log. Small enough not to matter at this scale,
// large enough that forward values and gradients stay finite.
inline constexpr double kDivEps = 1e-12;
inline constexpr double kLogEps = 1e-12;

// Central-difference check of reverse-mode gradients. `program` is run once
// on a tape (its params bound as leaves by the harness, in order) and then
// 2 * sum(param sizes) more times at perturbed values. Reported error is the
// spec'd ratio |analytic - central| / max(|analytic|, 1e-12), maximised over
// every parameter component.
struct FdReport {
  double max_rel = 0.0;
  double max_abs = 0.0;
  int64_t checked = 0;
};
FdReport finite_diff_check(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& program,
    const std::vector<Tensor>& params, double h);

}  // namespace noderf::grad
