// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

#include "noderf/parallel.hpp"

namespace noderf::grad {
namespace {

// Output-row block size for matmul kernels. Fixed (never derived from the
// thread count) so the arithmetic, and therefore every bit of the result, is
// identical no matter how many threads execute the blocks.
constexpr int64_t kGemmBlock = 64;
constexpr int64_t kEwChunk = 1 << 14;

// Every product below accumulates each output element as a strictly
// sequential fold over the contraction index (axpy over contiguous rows of
// the right factor; no cross-element reductions), so a row's bits depend
// only on that row's inputs: results are identical no matter how rows are
// batched, blocked, or spread across threads.

// C[m,n] = A[m,k] * B[k,n]
void gemm_nn(int64_t m, int64_t k, int64_t n, const double* a, const double* b, double* c) {
  parallel_for(m, kGemmBlock, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      double* crow = c + i * n;
      std::fill(crow, crow + n, 0.0);
      const double* arow = a + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        const double* brow = b + kk * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// C[m,k] = G[m,n] * B[k,n]^T
void gemm_nt(int64_t m, int64_t n, int64_t k, const double* g, const double* b, double* c) {
  // Materialize B^T once so the inner axpy streams contiguous rows.
  std::vector<double> bt(size_t(n) * size_t(k));
  for (int64_t r = 0; r < k; ++r) {
    for (int64_t j = 0; j < n; ++j) bt[size_t(j) * k + r] = b[r * n + j];
  }
  gemm_nn(m, n, k, g, bt.data(), c);
}

// C[k,n] = A[m,k]^T * G[m,n]
void gemm_tn(int64_t m, int64_t k, int64_t n, const double* a, const double* g, double* c) {
  std::vector<double> at(size_t(k) * size_t(m));
  for (int64_t r = 0; r < m; ++r) {
    for (int64_t j = 0; j < k; ++j) at[size_t(j) * m + r] = a[r * k + j];
  }
  gemm_nn(k, m, n, at.data(), g, c);
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename F>
void ew_unary(int64_t n, const double* x, double* out, F f) {
  parallel_for(n, kEwChunk, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) out[i] = f(x[i]);
  });
}

// out[big] = f(big side, tiled small side); `a_is_big` picks the argument
// order so subtraction and division keep their operands straight.
template <typename F>
void ew_binary(int64_t nbig, int64_t nsmall, const double* big, const double* small,
               bool a_is_big, double* out, F f) {
  if (nbig == nsmall) {
    parallel_for(nbig, kEwChunk, [&](int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i)
        out[i] = a_is_big ? f(big[i], small[i]) : f(small[i], big[i]);
    });
    return;
  }
  const int64_t reps = nbig / nsmall;
  const int64_t rep_chunk = std::max<int64_t>(1, kEwChunk / nsmall);
  parallel_for(reps, rep_chunk, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const double* bp = big + r * nsmall;
      double* op = out + r * nsmall;
      for (int64_t j = 0; j < nsmall; ++j)
        op[j] = a_is_big ? f(bp[j], small[j]) : f(small[j], bp[j]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double guarded_denom(double b) {
  if (std::fabs(b) >= kDivEps) return b;
  return b < 0.0 ? -kDivEps : kDivEps;
}

}  // namespace

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  require(!shape_.empty(), "Tensor: shape must have at least one axis");
  for (int64_t d : shape_)
    require(d > 0, "Tensor: extents must be positive, got ", shape_str(shape_));
  require(numel(shape_) == int64_t(data.size()), "Tensor: shape ", shape_str(shape_),
          " wants ", numel(shape_), " values, got ", data.size());
  data_ = std::make_shared<std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) {
  const int64_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(size_t(n), 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  const int64_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(size_t(n), v));
}

const std::vector<double>& Tensor::data() const {
  require(defined(), "Tensor: use of an undefined tensor");
  return *data_;
}

double Tensor::item() const {
  require(size() == 1, "Tensor::item: expected a single element, shape is ",
          shape_str(shape_));
  return (*data_)[0];
}

std::vector<double>& Tensor::mutable_data() {
  require(defined(), "Tensor: use of an undefined tensor");
  require(!on_tape(), "Tensor: in-place writes are not allowed on taped tensors");
  return *data_;
}

Tensor Tensor::detached() const {
  Tensor t;
  t.data_ = data_;
  t.shape_ = shape_;
  return t;
}

Tensor Tensor::clone() const {
  require(defined(), "Tensor: use of an undefined tensor");
  return Tensor(shape_, *data_);
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() {
  static std::atomic<uint64_t> next_id{1};
  id_ = next_id.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tape::leaf(const Tensor& value) {
  require(value.defined(), "Tape::leaf: undefined tensor");
  return record(Op::kLeaf, {}, value.detached());
}

Tensor Tape::constant(const Tensor& value) {
  require(value.defined(), "Tape::constant: undefined tensor");
  return record(Op::kConst, {}, value.detached());
}

int32_t Tape::intern_input(const Tensor& t) {
  require(t.defined(), "tape op: undefined input tensor");
  if (!t.on_tape()) return constant(t).node();
  require(t.tape() == this, "tape op: inputs belong to different graphs");
  require(t.epoch() == epoch_, "tape op: input is detached (its graph was reset)");
  return t.node();
}

Tensor Tape::record(Op op, const std::vector<Tensor>& inputs, Tensor value,
                    double a0, int64_t i0, int64_t i1) {
  Node n;
  n.op = op;
  n.a0 = a0;
  n.i0 = i0;
  n.i1 = i1;
  n.in.reserve(inputs.size());
  bool req = (op == Op::kLeaf);
  for (const Tensor& t : inputs) {
    const int32_t id = intern_input(t);
    n.in.push_back(id);
    req = req || nodes_[size_t(id)].requires_grad;
  }
  n.requires_grad = req;
  n.value = value.detached();
  n.value.tape_ = this;
  n.value.node_ = int32_t(nodes_.size());
  n.value.epoch_ = epoch_;
  Tensor out = n.value;
  nodes_.push_back(std::move(n));
  return out;
}

void Tape::reset() {
  nodes_.clear();
  epoch_++;
}

// ---------------------------------------------------------------------------
// Op construction helpers

namespace {

Tape* resolve_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->on_tape()) continue;
    require(t->epoch() == t->tape()->epoch(),
            "tape op: input is detached (its graph was reset)");
    if (!tape)
      tape = t->tape();
    else
      require(tape == t->tape(), "tape op: inputs belong to different graphs");
  }
  return tape;
}

Tensor finish(Op op, std::initializer_list<const Tensor*> ins, Tensor value,
              double a0 = 0.0, int64_t i0 = 0, int64_t i1 = 0) {
  if (Tape* tape = resolve_tape(ins)) {
    std::vector<Tensor> v;
    v.reserve(ins.size());
    for (const Tensor* t : ins) v.push_back(*t);
    return tape->record(op, v, std::move(value), a0, i0, i1);
  }
  return value;
}

struct BinaryPlan {
  const Tensor* big;
  const Tensor* small;
  bool a_is_big;
};

BinaryPlan plan_binary(const char* op, const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined(), op, ": undefined input tensor");
  if (a.shape() == b.shape()) return {&a, &b, true};
  if (is_suffix(b.shape(), a.shape())) return {&a, &b, true};
  if (is_suffix(a.shape(), b.shape())) return {&b, &a, false};
  fail(op, ": shapes ", shape_str(a.shape()), " and ", shape_str(b.shape()),
       " do not broadcast (one must be a trailing suffix of the other)");
}

template <typename F>
Tensor binary_op(const char* name, Op op, const Tensor& a, const Tensor& b, F f) {
  const BinaryPlan p = plan_binary(name, a, b);
  Tensor out = Tensor::zeros(p.big->shape());
  ew_binary(p.big->size(), p.small->size(), p.big->ptr(), p.small->ptr(),
            p.a_is_big, out.mutable_data().data(), f);
  return finish(op, {&a, &b}, std::move(out));
}

template <typename F>
Tensor unary_op(Op op, const Tensor& a, F f) {
  require(a.defined(), "tape op: undefined input tensor");
  Tensor out = Tensor::zeros(a.shape());
  ew_unary(a.size(), a.ptr(), out.mutable_data().data(), f);
  return finish(op, {&a}, std::move(out));
}

}  // namespace

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined(), "matmul: undefined input tensor");
  require(a.rank() == 2 && b.rank() == 2, "matmul: expects rank-2 tensors, got ",
          shape_str(a.shape()), " x ", shape_str(b.shape()));
  require(a.dim(1) == b.dim(0), "matmul: inner extents differ, ",
          shape_str(a.shape()), " x ", shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  gemm_nn(m, k, n, a.ptr(), b.ptr(), out.mutable_data().data());
  return finish(Op::kMatmul, {&a, &b}, std::move(out));
}

Tensor transpose(const Tensor& a) {
  require(a.defined() && a.rank() == 2, "transpose: expects a rank-2 tensor");
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  double* o = out.mutable_data().data();
  const double* x = a.ptr();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) o[j * m + i] = x[i * n + j];
  return finish(Op::kTranspose, {&a}, std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op("add", Op::kAdd, a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op("sub", Op::kSub, a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op("mul", Op::kMul, a, b, [](double x, double y) { return x * y; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  return binary_op("divide", Op::kDiv, a, b,
                   [](double x, double y) { return x / guarded_denom(y); });
}

Tensor scale(const Tensor& a, double s) {
  require(a.defined(), "scale: undefined input tensor");
  Tensor out = Tensor::zeros(a.shape());
  ew_unary(a.size(), a.ptr(), out.mutable_data().data(),
           [s](double x) { return x * s; });
  return finish(Op::kScale, {&a}, std::move(out), s);
}

Tensor concat(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat: needs at least one input");
  const Shape& s0 = parts[0].shape();
  int64_t last_total = 0;
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    require(p.defined(), "concat: undefined input tensor");
    require(p.rank() == int64_t(s0.size()), "concat: rank mismatch, ",
            shape_str(p.shape()), " vs ", shape_str(s0));
    for (size_t i = 0; i + 1 < s0.size(); ++i)
      require(p.shape()[i] == s0[i], "concat: leading extents differ, ",
              shape_str(p.shape()), " vs ", shape_str(s0));
    last_total += p.shape().back();
    if (p.on_tape()) {
      require(p.epoch() == p.tape()->epoch(),
              "tape op: input is detached (its graph was reset)");
      if (!tape)
        tape = p.tape();
      else
        require(tape == p.tape(), "tape op: inputs belong to different graphs");
    }
  }
  Shape out_shape = s0;
  out_shape.back() = last_total;
  Tensor out = Tensor::zeros(out_shape);
  const int64_t rows = numel(out_shape) / last_total;
  double* o = out.mutable_data().data();
  int64_t col = 0;
  for (const Tensor& p : parts) {
    const int64_t w = p.shape().back();
    const double* x = p.ptr();
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(o + r * last_total + col, x + r * w, size_t(w) * sizeof(double));
    col += w;
  }
  if (tape) return tape->record(Op::kConcat, parts, std::move(out));
  return out;
}

Tensor slice_last(const Tensor& a, int64_t start, int64_t len) {
  require(a.defined(), "slice_last: undefined input tensor");
  const int64_t w = a.shape().back();
  require(start >= 0 && len >= 1 && start + len <= w, "slice_last: range [", start,
          ", ", start + len, ") out of bounds for last extent ", w);
  Shape out_shape = a.shape();
  out_shape.back() = len;
  Tensor out = Tensor::zeros(out_shape);
  const int64_t rows = a.size() / w;
  double* o = out.mutable_data().data();
  const double* x = a.ptr();
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(o + r * len, x + r * w + start, size_t(len) * sizeof(double));
  return finish(Op::kSlice, {&a}, std::move(out), 0.0, start, len);
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(a.defined(), "reshape: undefined input tensor");
  require(numel(shape) == a.size(), "reshape: cannot view ", shape_str(a.shape()),
          " as ", shape_str(shape));
  Tensor out(std::move(shape), a.data());
  return finish(Op::kReshape, {&a}, std::move(out));
}

Tensor sum(const Tensor& a) {
  require(a.defined(), "sum: undefined input tensor");
  double acc = 0.0;
  const double* x = a.ptr();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return finish(Op::kSum, {&a}, Tensor::scalar(acc));
}

Tensor mean(const Tensor& a) {
  require(a.defined(), "mean: undefined input tensor");
  double acc = 0.0;
  const double* x = a.ptr();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return finish(Op::kMean, {&a}, Tensor::scalar(acc / double(n)));
}

Tensor l2_squared(const Tensor& a) {
  require(a.defined(), "l2_squared: undefined input tensor");
  double acc = 0.0;
  const double* x = a.ptr();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return finish(Op::kL2Sq, {&a}, Tensor::scalar(acc));
}

Tensor cumsum_exclusive_last(const Tensor& a) {
  require(a.defined(), "cumsum_exclusive_last: undefined input tensor");
  const int64_t w = a.shape().back();
  const int64_t rows = a.size() / w;
  Tensor out = Tensor::zeros(a.shape());
  double* o = out.mutable_data().data();
  const double* x = a.ptr();
  parallel_for(rows, std::max<int64_t>(1, kEwChunk / w), [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      double acc = 0.0;
      for (int64_t j = 0; j < w; ++j) {
        o[r * w + j] = acc;
        acc += x[r * w + j];
      }
    }
  });
  return finish(Op::kCumsumEx, {&a}, std::move(out));
}

Tensor relu(const Tensor& a) {
  return unary_op(Op::kRelu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Tensor tanh(const Tensor& a) {
  return unary_op(Op::kTanh, a, [](double x) { return std::tanh(x); });
}
Tensor sigmoid(const Tensor& a) {
  return unary_op(Op::kSigmoid, a, [](double x) { return stable_sigmoid(x); });
}
Tensor softplus(const Tensor& a) {
  return unary_op(Op::kSoftplus, a, [](double x) {
    return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0);
  });
}
Tensor exp(const Tensor& a) {
  return unary_op(Op::kExp, a, [](double x) { return std::exp(x); });
}
Tensor log(const Tensor& a) {
  return unary_op(Op::kLog, a, [](double x) { return std::log(std::max(x, kLogEps)); });
}
Tensor square(const Tensor& a) {
  return unary_op(Op::kSquare, a, [](double x) { return x * x; });
}
Tensor abs(const Tensor& a) {
  return unary_op(Op::kAbs, a, [](double x) { return std::fabs(x); });
}

// ---------------------------------------------------------------------------
// Backward

namespace {

// dst += scale * src, allocating dst on first touch.
void accum(Tensor& dst, const Shape& shape, const double* src, double s = 1.0) {
  if (!dst.defined()) dst = Tensor::zeros(shape);
  double* d = dst.mutable_data().data();
  const int64_t n = dst.size();
  parallel_for(n, kEwChunk, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) d[i] += s * src[i];
  });
}

// dst(small) += scale * sum-over-repeats of src(big).
void accum_reduce(Tensor& dst, const Shape& small_shape, const double* src,
                  int64_t big_n, double s = 1.0) {
  if (!dst.defined()) dst = Tensor::zeros(small_shape);
  double* d = dst.mutable_data().data();
  const int64_t ns = dst.size();
  const int64_t reps = big_n / ns;
  parallel_for(ns, 4096, [&](int64_t j0, int64_t j1) {
    for (int64_t j = j0; j < j1; ++j) {
      double acc = 0.0;
      for (int64_t r = 0; r < reps; ++r) acc += src[r * ns + j];
      d[j] += s * acc;
    }
  });
}

// Routes the gradient of a broadcast binary op to one input: full-size if the
// input was the big side, reduced otherwise.
void accum_auto(Tensor& dst, const Shape& in_shape, int64_t out_n,
                const double* src, double s = 1.0) {
  if (numel(in_shape) == out_n)
    accum(dst, in_shape, src, s);
  else
    accum_reduce(dst, in_shape, src, out_n, s);
}

}  // namespace

GradMap Tape::backward(const Tensor& loss) {
  require(loss.defined() && loss.on_tape() && loss.tape() == this,
          "backward: loss is not on this graph");
  require(loss.epoch() == epoch_, "backward: loss is detached (graph was reset)");
  require(loss.size() == 1, "backward: loss must be a scalar, got shape ",
          shape_str(loss.shape()));

  std::vector<Tensor> g(nodes_.size());
  g[size_t(loss.node())] = Tensor::full(loss.shape(), 1.0);

  for (int32_t id = loss.node(); id >= 0; --id) {
    const Node& nd = nodes_[size_t(id)];
    Tensor& go = g[size_t(id)];
    if (!nd.requires_grad || !go.defined()) continue;
    if (nd.op == Op::kLeaf || nd.op == Op::kConst) continue;

    const double* gp = go.ptr();
    const int64_t gn = go.size();
    auto in_node = [&](size_t i) -> const Node& { return nodes_[size_t(nd.in[i])]; };
    auto wants = [&](size_t i) { return in_node(i).requires_grad; };
    auto gslot = [&](size_t i) -> Tensor& { return g[size_t(nd.in[i])]; };

    switch (nd.op) {
      case Op::kMatmul: {
        const Tensor& A = in_node(0).value;
        const Tensor& B = in_node(1).value;
        const int64_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
        if (wants(0)) {
          Tensor t = Tensor::zeros({m, k});
          gemm_nt(m, n, k, gp, B.ptr(), t.mutable_data().data());
          accum(gslot(0), t.shape(), t.ptr());
        }
        if (wants(1)) {
          Tensor t = Tensor::zeros({k, n});
          gemm_tn(m, k, n, A.ptr(), gp, t.mutable_data().data());
          accum(gslot(1), t.shape(), t.ptr());
        }
        break;
      }
      case Op::kTranspose: {
        const Tensor& A = in_node(0).value;
        if (!wants(0)) break;
        const int64_t m = A.dim(0), n = A.dim(1);
        Tensor t = Tensor::zeros({m, n});
        double* tp = t.mutable_data().data();
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < m; ++j) tp[j * n + i] = gp[i * m + j];
        accum(gslot(0), t.shape(), t.ptr());
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const double s1 = (nd.op == Op::kSub) ? -1.0 : 1.0;
        if (wants(0)) accum_auto(gslot(0), in_node(0).value.shape(), gn, gp);
        if (wants(1)) accum_auto(gslot(1), in_node(1).value.shape(), gn, gp, s1);
        break;
      }
      case Op::kMul:
      case Op::kDiv: {
        const Tensor& A = in_node(0).value;
        const Tensor& B = in_node(1).value;
        const int64_t na = A.size(), nb = B.size();
        const double* ap = A.ptr();
        const double* bp = B.ptr();
        // Gradients are formed at output size, then reduced if that input
        // was broadcast. Temps are fine here; these ops are not the hot path
        // at large sizes with broadcasting.
        if (wants(0)) {
          Tensor t = Tensor::zeros(go.shape());
          double* tp = t.mutable_data().data();
          if (nd.op == Op::kMul) {
            parallel_for(gn, kEwChunk, [&](int64_t b, int64_t e) {
              for (int64_t i = b; i < e; ++i) tp[i] = gp[i] * bp[i % nb];
            });
          } else {
            parallel_for(gn, kEwChunk, [&](int64_t b, int64_t e) {
              for (int64_t i = b; i < e; ++i)
                tp[i] = gp[i] / guarded_denom(bp[i % nb]);
            });
          }
          accum_auto(gslot(0), A.shape(), gn, tp);
        }
        if (wants(1)) {
          Tensor t = Tensor::zeros(go.shape());
          double* tp = t.mutable_data().data();
          if (nd.op == Op::kMul) {
            parallel_for(gn, kEwChunk, [&](int64_t b, int64_t e) {
              for (int64_t i = b; i < e; ++i) tp[i] = gp[i] * ap[i % na];
            });
          } else {
            parallel_for(gn, kEwChunk, [&](int64_t b, int64_t e) {
              for (int64_t i = b; i < e; ++i) {
                const double bv = bp[i % nb];
                if (std::fabs(bv) < kDivEps) {
                  tp[i] = 0.0;  // clamped region: derivative wrt b is zero
                } else {
                  tp[i] = -gp[i] * ap[i % na] / (bv * bv);
                }
              }
            });
          }
          accum_auto(gslot(1), B.shape(), gn, tp);
        }
        break;
      }
      case Op::kScale:
        if (wants(0)) accum(gslot(0), in_node(0).value.shape(), gp, nd.a0);
        break;
      case Op::kConcat: {
        const int64_t wout = nd.value.shape().back();
        const int64_t rows = gn / wout;
        int64_t col = 0;
        for (size_t i = 0; i < nd.in.size(); ++i) {
          const Tensor& part = in_node(i).value;
          const int64_t w = part.shape().back();
          if (wants(i)) {
            Tensor& slot = gslot(i);
            if (!slot.defined()) slot = Tensor::zeros(part.shape());
            double* d = slot.mutable_data().data();
            for (int64_t r = 0; r < rows; ++r)
              for (int64_t j = 0; j < w; ++j) d[r * w + j] += gp[r * wout + col + j];
          }
          col += w;
        }
        break;
      }
      case Op::kSlice: {
        if (!wants(0)) break;
        const Tensor& A = in_node(0).value;
        const int64_t w = A.shape().back();
        const int64_t rows = A.size() / w;
        Tensor& slot = gslot(0);
        if (!slot.defined()) slot = Tensor::zeros(A.shape());
        double* d = slot.mutable_data().data();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < nd.i1; ++j)
            d[r * w + nd.i0 + j] += gp[r * nd.i1 + j];
        break;
      }
      case Op::kReshape:
        if (wants(0)) accum(gslot(0), in_node(0).value.shape(), gp);
        break;
      case Op::kSum:
      case Op::kMean: {
        if (!wants(0)) break;
        const Tensor& A = in_node(0).value;
        const double v = gp[0] * (nd.op == Op::kMean ? 1.0 / double(A.size()) : 1.0);
        Tensor& slot = gslot(0);
        if (!slot.defined()) slot = Tensor::zeros(A.shape());
        double* d = slot.mutable_data().data();
        const int64_t n = A.size();
        parallel_for(n, kEwChunk, [&](int64_t b, int64_t e) {
          for (int64_t i = b; i < e; ++i) d[i] += v;
        });
        break;
      }
      case Op::kL2Sq: {
        if (!wants(0)) break;
        const Tensor& A = in_node(0).value;
        const double v = 2.0 * gp[0];
        Tensor& slot = gslot(0);
        if (!slot.defined()) slot = Tensor::zeros(A.shape());
        double* d = slot.mutable_data().data();
        const double* x = A.ptr();
        const int64_t n = A.size();
        parallel_for(n, kEwChunk, [&](int64_t b, int64_t e) {
          for (int64_t i = b; i < e; ++i) d[i] += v * x[i];
        });
        break;
      }
      case Op::kCumsumEx: {
        if (!wants(0)) break;
        const Tensor& A = in_node(0).value;
        const int64_t w = A.shape().back();
        const int64_t rows = A.size() / w;
        Tensor& slot = gslot(0);
        if (!slot.defined()) slot = Tensor::zeros(A.shape());
        double* d = slot.mutable_data().data();
        parallel_for(rows, std::max<int64_t>(1, kEwChunk / w),
                     [&](int64_t r0, int64_t r1) {
                       for (int64_t r = r0; r < r1; ++r) {
                         double acc = 0.0;
                         for (int64_t j = w - 1; j >= 0; --j) {
                           d[r * w + j] += acc;
                           acc += gp[r * w + j];
                         }
                       }
                     });
        break;
      }
      // Unary elementwise: fused g * f'(x) accumulation.
      case Op::kRelu:
      case Op::kTanh:
      case Op::kSigmoid:
      case Op::kSoftplus:
      case Op::kExp:
      case Op::kLog:
      case Op::kSquare:
      case Op::kAbs: {
        if (!wants(0)) break;
        const Tensor& A = in_node(0).value;
        const double* x = A.ptr();
        const double* y = nd.value.ptr();
        Tensor& slot = gslot(0);
        if (!slot.defined()) slot = Tensor::zeros(A.shape());
        double* d = slot.mutable_data().data();
        const Op op = nd.op;
        parallel_for(gn, kEwChunk, [&](int64_t b, int64_t e) {
          switch (op) {
            case Op::kRelu:
              for (int64_t i = b; i < e; ++i) d[i] += x[i] > 0.0 ? gp[i] : 0.0;
              break;
            case Op::kTanh:
              for (int64_t i = b; i < e; ++i) d[i] += gp[i] * (1.0 - y[i] * y[i]);
              break;
            case Op::kSigmoid:
              for (int64_t i = b; i < e; ++i) d[i] += gp[i] * y[i] * (1.0 - y[i]);
              break;
            case Op::kSoftplus:
              for (int64_t i = b; i < e; ++i) d[i] += gp[i] * stable_sigmoid(x[i]);
              break;
            case Op::kExp:
              for (int64_t i = b; i < e; ++i) d[i] += gp[i] * y[i];
              break;
            case Op::kLog:
              for (int64_t i = b; i < e; ++i) d[i] += gp[i] / std::max(x[i], kLogEps);
              break;
            case Op::kSquare:
              for (int64_t i = b; i < e; ++i) d[i] += 2.0 * x[i] * gp[i];
              break;
            case Op::kAbs:
              for (int64_t i = b; i < e; ++i)
                d[i] += x[i] > 0.0 ? gp[i] : (x[i] < 0.0 ? -gp[i] : 0.0);
              break;
            default:
              break;
          }
        });
        break;
      }
      case Op::kLeaf:
      case Op::kConst:
        break;
    }
    go = Tensor();  // this node's gradient is no longer needed
  }

  GradMap out;
  out.epoch_ = epoch_;
  for (size_t id = 0; id < nodes_.size(); ++id) {
    const Node& nd = nodes_[id];
    if (nd.op != Op::kLeaf && nd.op != Op::kConst) continue;
    out.shapes_.emplace_back(int32_t(id), nd.value.shape());
    if (nd.op == Op::kLeaf && g[id].defined())
      out.grads_.emplace_back(int32_t(id), std::move(g[id]));
  }
  reset();
  return out;
}

// ---------------------------------------------------------------------------
// GradMap

const Tensor* GradMap::find(const Tensor& leaf) const {
  require(leaf.defined() && leaf.node() >= 0,
          "GradMap: tensor was never registered on a graph");
  require(leaf.epoch() == epoch_,
          "GradMap: tensor does not belong to the consumed graph");
  auto it = std::lower_bound(
      grads_.begin(), grads_.end(), leaf.node(),
      [](const auto& p, int32_t id) { return p.first < id; });
  if (it != grads_.end() && it->first == leaf.node()) return &it->second;
  return nullptr;
}

Tensor GradMap::wrt(const Tensor& leaf) const {
  if (const Tensor* t = find(leaf)) return *t;
  auto it = std::lower_bound(
      shapes_.begin(), shapes_.end(), leaf.node(),
      [](const auto& p, int32_t id) { return p.first < id; });
  require(it != shapes_.end() && it->first == leaf.node(),
          "GradMap: tensor was not a leaf or constant of the consumed graph");
  return Tensor::zeros(it->second);
}

bool GradMap::nonzero(const Tensor& leaf) const { return find(leaf) != nullptr; }

// ---------------------------------------------------------------------------
// Finite differences

FdReport finite_diff_check(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& program,
    const std::vector<Tensor>& params, double h) {
  require(h > 0.0, "finite_diff_check: h must be positive");
  std::vector<Tensor> vals;
  vals.reserve(params.size());
  for (const Tensor& p : params) vals.push_back(p.clone());

  auto eval = [&](Tape& tape, std::vector<Tensor>* bound_out) {
    std::vector<Tensor> bound;
    bound.reserve(vals.size());
    for (const Tensor& v : vals) bound.push_back(tape.leaf(v));
    Tensor loss = program(tape, bound);
    require(loss.size() == 1, "finite_diff_check: program must produce a scalar");
    if (bound_out) *bound_out = std::move(bound);
    return loss;
  };

  // Analytic pass.
  Tape tape;
  std::vector<Tensor> bound;
  Tensor loss = eval(tape, &bound);
  GradMap grads = tape.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(bound.size());
  for (const Tensor& b : bound) analytic.push_back(grads.wrt(b));

  // Central differences, one component at a time.
  FdReport report;
  for (size_t i = 0; i < vals.size(); ++i) {
    std::vector<double>& v = vals[i].mutable_data();
    const double* a = analytic[i].ptr();
    for (size_t j = 0; j < v.size(); ++j) {
      const double orig = v[j];
      v[j] = orig + h;
      Tape tp;
      const double lp = eval(tp, nullptr).item();
      v[j] = orig - h;
      Tape tm;
      const double lm = eval(tm, nullptr).item();
      v[j] = orig;
      const double central = (lp - lm) / (2.0 * h);
      const double abs_err = std::fabs(a[j] - central);
      const double rel_err = abs_err / std::max(std::fabs(a[j]), 1e-12);
      report.max_abs = std::max(report.max_abs, abs_err);
      report.max_rel = std::max(report.max_rel, rel_err);
      report.checked++;
    }
  }
  return report;
}

}  // namespace noderf::grad
