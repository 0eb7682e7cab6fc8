#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mstcn/rng.hpp"

namespace mstcn {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

template <class Real>
class Tape;

// Dense row-major tensor. Copying a Tensor copies the handle; the underlying
// storage is shared so autodiff closures and user code see one buffer.
template <class Real>
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<Impl>()) {}

  explicit Tensor(Shape shape, Real fill = Real(0))
      : impl_(std::make_shared<Impl>()) {
    check_shape(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(numel(impl_->shape), fill);
  }

  Tensor(Shape shape, std::vector<Real> data)
      : impl_(std::make_shared<Impl>()) {
    check_shape(shape);
    if (static_cast<std::int64_t>(data.size()) != numel(shape))
      throw std::invalid_argument("tensor data size " +
                                  std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, Real v) { return Tensor(std::move(shape), v); }

  static Tensor scalar(Real v) { return Tensor(Shape{1}, std::vector<Real>{v}); }

  static Tensor randn(Shape shape, Rng& rng, Real stddev = Real(1)) {
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = static_cast<Real>(rng.normal() * stddev);
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, Real lo, Real hi) {
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = static_cast<Real>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::vector<Real>& data() { return impl_->data; }
  const std::vector<Real>& data() const { return impl_->data; }
  Real& at(std::int64_t i) { return impl_->data[i]; }
  Real at(std::int64_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return impl_->has_grad; }
  std::vector<Real>& grad() {
    if (!impl_->has_grad)
      throw std::runtime_error("tensor has no gradient (not reached by backward)");
    return impl_->grad;
  }
  const std::vector<Real>& grad() const {
    return const_cast<Tensor*>(this)->grad();
  }

  // Zero-filled grad buffer, allocated on first access during backward.
  std::vector<Real>& grad_buffer() {
    if (!impl_->has_grad) {
      impl_->grad.assign(impl_->data.size(), Real(0));
      impl_->has_grad = true;
    }
    return impl_->grad;
  }

  void clear_grad() {
    impl_->grad.clear();
    impl_->has_grad = false;
  }

  int node_id() const { return impl_->node_id; }
  void set_node_id(int id) { impl_->node_id = id; }

  // A handle to the same storage with no graph membership.
  Tensor detached() const {
    Tensor t;
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

  bool all_finite() const {
    for (Real v : impl_->data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;
    bool has_grad = false;
    bool requires_grad = false;
    int node_id = -1;
  };

  static void check_shape(const Shape& s) {
    for (auto d : s)
      if (d <= 0)
        throw std::invalid_argument("non-positive extent in shape " +
                                    shape_str(s));
  }

  std::shared_ptr<Impl> impl_;
};

// Recording tape for reverse-mode differentiation. Ops are appended in
// forward order, which is a topological order by construction; backward
// walks the list once in reverse and accumulates gradients into the shared
// tensor storage. One tape per training step, discarded afterwards.
template <class Real>
class Tape {
 public:
  struct Op {
    std::vector<int> inputs;
    int output = -1;
    std::function<void()> backward;
  };

  int record(const std::vector<Tensor<Real>>& inputs, Tensor<Real>& output,
             std::function<void()> backward_fn) {
    Op op;
    for (const auto& in : inputs) op.inputs.push_back(in.node_id());
    const int id = next_id_++;
    op.output = id;
    op.backward = std::move(backward_fn);
    output.set_node_id(id);
    output.set_requires_grad(true);
    ops_.push_back(std::move(op));
    return id;
  }

  void backward(Tensor<Real>& loss) {
    if (loss.size() != 1)
      throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                  shape_str(loss.shape()));
    if (loss.node_id() < 0)
      throw std::invalid_argument("backward on a tensor detached from the tape");
    loss.grad_buffer()[0] = Real(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward();
  }

  std::size_t num_ops() const { return ops_.size(); }

 private:
  std::vector<Op> ops_;
  int next_id_ = 0;
};

// True when any input requires grad, so the op must be recorded.
template <class Real>
inline bool tracked(const Tape<Real>* tape, const Tensor<Real>& a) {
  return tape != nullptr && a.requires_grad();
}
template <class Real>
inline bool tracked(const Tape<Real>* tape, const Tensor<Real>& a,
                    const Tensor<Real>& b) {
  return tape != nullptr && (a.requires_grad() || b.requires_grad());
}

namespace ops {

// ---------------------------------------------------------------------------
// Broadcasting (numpy-style, right-aligned; extents must match or be 1)
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da =
        i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db =
        i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument("shapes not broadcastable: " + shape_str(a) +
                                  " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` viewed as the broadcast shape `out` (0 on expanded axes).
inline std::vector<std::int64_t> broadcast_strides(const Shape& s,
                                                   const Shape& out) {
  auto st = row_major_strides(s);
  std::vector<std::int64_t> r(out.size(), 0);
  const std::size_t off = out.size() - s.size();
  for (std::size_t i = 0; i < s.size(); ++i)
    r[off + i] = (s[i] == 1 && out[off + i] != 1) ? 0 : st[i];
  return r;
}

enum class Binary { add, sub, mul, div };

template <class Real>
Tensor<Real> binary(Binary kind, const Tensor<Real>& a, const Tensor<Real>& b,
                    Tape<Real>* tape) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor<Real> out(out_shape);
  const std::int64_t n = out.size();
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();

  auto apply = [kind](Real x, Real y) -> Real {
    switch (kind) {
      case Binary::add: return x + y;
      case Binary::sub: return x - y;
      case Binary::mul: return x * y;
      case Binary::div: return x / y;
    }
    return Real(0);
  };

  if (a.shape() == b.shape()) {
    for (std::int64_t i = 0; i < n; ++i) od[i] = apply(ad[i], bd[i]);
  } else {
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    const auto so = row_major_strides(out_shape);
    std::vector<std::int64_t> idx(out_shape.size(), 0);
    for (std::int64_t i = 0; i < n; ++i) {
      std::int64_t ia = 0, ib = 0, rem = i;
      for (std::size_t d = 0; d < out_shape.size(); ++d) {
        const std::int64_t q = rem / so[d];
        rem %= so[d];
        ia += q * sa[d];
        ib += q * sb[d];
      }
      od[i] = apply(ad[ia], bd[ib]);
    }
  }

  if (tracked(tape, a, b)) {
    Tensor<Real> ac = a, bc = b, oc = out;
    tape->record({a, b}, out, [kind, ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      const auto& g = oc.grad();
      const Shape& os = oc.shape();
      const auto so = row_major_strides(os);
      const auto sa = broadcast_strides(ac.shape(), os);
      const auto sb = broadcast_strides(bc.shape(), os);
      const std::int64_t n = oc.size();
      auto& ga = ac.grad_buffer();
      auto& gb = bc.grad_buffer();
      const auto& ad = ac.data();
      const auto& bd = bc.data();
      for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t ia = 0, ib = 0, rem = i;
        for (std::size_t d = 0; d < os.size(); ++d) {
          const std::int64_t q = rem / so[d];
          rem %= so[d];
          ia += q * sa[d];
          ib += q * sb[d];
        }
        switch (kind) {
          case Binary::add:
            ga[ia] += g[i];
            gb[ib] += g[i];
            break;
          case Binary::sub:
            ga[ia] += g[i];
            gb[ib] -= g[i];
            break;
          case Binary::mul:
            ga[ia] += g[i] * bd[ib];
            gb[ib] += g[i] * ad[ia];
            break;
          case Binary::div:
            ga[ia] += g[i] / bd[ib];
            gb[ib] -= g[i] * ad[ia] / (bd[ib] * bd[ib]);
            break;
        }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b,
                 Tape<Real>* tape = nullptr) {
  return binary(Binary::add, a, b, tape);
}
template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b,
                 Tape<Real>* tape = nullptr) {
  return binary(Binary::sub, a, b, tape);
}
template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b,
                 Tape<Real>* tape = nullptr) {
  return binary(Binary::mul, a, b, tape);
}
template <class Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b,
                 Tape<Real>* tape = nullptr) {
  return binary(Binary::div, a, b, tape);
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s, Tape<Real>* tape = nullptr) {
  Tensor<Real> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * s;
  if (tracked(tape, a)) {
    Tensor<Real> ac = a, oc = out;
    tape->record({a}, out, [s, ac, oc]() mutable {
      if (!oc.has_grad()) return;
      auto& ga = ac.grad_buffer();
      const auto& g = oc.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real s,
                        Tape<Real>* tape = nullptr) {
  Tensor<Real> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + s;
  if (tracked(tape, a)) {
    Tensor<Real> ac = a, oc = out;
    tape->record({a}, out, [ac, oc]() mutable {
      if (!oc.has_grad()) return;
      auto& ga = ac.grad_buffer();
      const auto& g = oc.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

// ReLU with subgradient 0 at the kink.
template <class Real>
Tensor<Real> relu(const Tensor<Real>& a, Tape<Real>* tape = nullptr) {
  Tensor<Real> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i)
    out.at(i) = a.at(i) > Real(0) ? a.at(i) : Real(0);
  if (tracked(tape, a)) {
    Tensor<Real> ac = a, oc = out;
    tape->record({a}, out, [ac, oc]() mutable {
      if (!oc.has_grad()) return;
      auto& ga = ac.grad_buffer();
      const auto& g = oc.grad();
      const auto& x = ac.data();
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (x[i] > Real(0)) ga[i] += g[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul (rank-2 only)
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b,
                    Tape<Real>* tape = nullptr) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul requires rank-2 tensors, got " +
                                shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul inner dimensions disagree: " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const std::int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<Real> out(Shape{M, N});
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (std::int64_t m = 0; m < M; ++m)
    for (std::int64_t k = 0; k < K; ++k) {
      const Real av = ad[m * K + k];
      if (av == Real(0)) continue;
      for (std::int64_t n = 0; n < N; ++n) od[m * N + n] += av * bd[k * N + n];
    }

  if (tracked(tape, a, b)) {
    Tensor<Real> ac = a, bc = b, oc = out;
    tape->record({a, b}, out, [ac, bc, oc, M, K, N]() mutable {
      if (!oc.has_grad()) return;
      const auto& g = oc.grad();
      const auto& ad = ac.data();
      const auto& bd = bc.data();
      auto& ga = ac.grad_buffer();
      auto& gb = bc.grad_buffer();
      // dA = dY * B^T ; dB = A^T * dY
      for (std::int64_t m = 0; m < M; ++m)
        for (std::int64_t n = 0; n < N; ++n) {
          const Real gv = g[m * N + n];
          if (gv == Real(0)) continue;
          for (std::int64_t k = 0; k < K; ++k) {
            ga[m * K + k] += gv * bd[k * N + n];
            gb[k * N + n] += ad[m * K + k] * gv;
          }
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class Reduce { sum, mean, max };

inline Shape reduced_shape(const Shape& in, const std::vector<int>& axes,
                           bool keepdims) {
  std::vector<bool> drop(in.size(), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= static_cast<int>(in.size()))
      throw std::invalid_argument("reduce axis " + std::to_string(ax) +
                                  " invalid for shape " + shape_str(in));
    drop[ax] = true;
  }
  Shape out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (drop[i]) {
      if (keepdims) out.push_back(1);
    } else {
      out.push_back(in[i]);
    }
  }
  if (out.empty()) out.push_back(1);
  return out;
}

template <class Real>
Tensor<Real> reduce(Reduce kind, const Tensor<Real>& x,
                    const std::vector<int>& axes, bool keepdims = false,
                    Tape<Real>* tape = nullptr) {
  if (axes.empty()) throw std::invalid_argument("reduce requires >=1 axis");
  const Shape& in = x.shape();
  const Shape out_shape = reduced_shape(in, axes, keepdims);
  std::vector<bool> is_reduced(in.size(), false);
  for (int ax : axes) is_reduced[ax] = true;

  std::int64_t count = 1;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (is_reduced[i]) count *= in[i];

  // Map each input linear index to its output linear index.
  const auto in_strides = row_major_strides(in);
  Shape kept;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (!is_reduced[i]) kept.push_back(in[i]);
  if (kept.empty()) kept.push_back(1);
  const auto kept_strides = row_major_strides(kept);

  auto out_index = [in_strides, kept_strides, is_reduced,
                    rank = in.size()](std::int64_t lin) {
    std::int64_t oi = 0, kd = 0, rem = lin;
    for (std::size_t d = 0; d < rank; ++d) {
      const std::int64_t q = rem / in_strides[d];
      rem %= in_strides[d];
      if (!is_reduced[d]) oi += q * kept_strides[kd++];
    }
    return oi;
  };

  Tensor<Real> out(out_shape);
  auto& od = out.data();
  const auto& xd = x.data();
  std::vector<std::int64_t> argmax;
  if (kind == Reduce::max) {
    od.assign(od.size(), std::numeric_limits<Real>::lowest());
    argmax.assign(od.size(), -1);
    for (std::int64_t i = 0; i < x.size(); ++i) {
      const std::int64_t oi = out_index(i);
      if (xd[i] > od[oi]) {
        od[oi] = xd[i];
        argmax[oi] = i;
      }
    }
  } else {
    for (std::int64_t i = 0; i < x.size(); ++i) od[out_index(i)] += xd[i];
    if (kind == Reduce::mean)
      for (auto& v : od) v /= static_cast<Real>(count);
  }

  if (tracked(tape, x)) {
    Tensor<Real> xc = x, oc = out;
    tape->record({x}, out, [kind, xc, oc, out_index, count, argmax]() mutable {
      if (!oc.has_grad()) return;
      const auto& g = oc.grad();
      auto& gx = xc.grad_buffer();
      if (kind == Reduce::max) {
        for (std::size_t oi = 0; oi < g.size(); ++oi)
          if (argmax[oi] >= 0) gx[argmax[oi]] += g[oi];
      } else {
        const Real inv = kind == Reduce::mean
                             ? Real(1) / static_cast<Real>(count)
                             : Real(1);
        for (std::int64_t i = 0; i < xc.size(); ++i)
          gx[i] += g[out_index(i)] * inv;
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x, const std::vector<int>& axes,
                 bool keepdims = false, Tape<Real>* tape = nullptr) {
  return reduce(Reduce::sum, x, axes, keepdims, tape);
}
template <class Real>
Tensor<Real> mean(const Tensor<Real>& x, const std::vector<int>& axes,
                  bool keepdims = false, Tape<Real>* tape = nullptr) {
  return reduce(Reduce::mean, x, axes, keepdims, tape);
}
template <class Real>
Tensor<Real> reduce_max(const Tensor<Real>& x, const std::vector<int>& axes,
                        bool keepdims = false, Tape<Real>* tape = nullptr) {
  return reduce(Reduce::max, x, axes, keepdims, tape);
}

template <class Real>
Tensor<Real> sum_all(const Tensor<Real>& x, Tape<Real>* tape = nullptr) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return sum(x, axes, false, tape);
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape,
                     Tape<Real>* tape = nullptr) {
  if (numel(shape) != x.size())
    throw std::invalid_argument("reshape " + shape_str(x.shape()) + " -> " +
                                shape_str(shape) + " changes element count");
  Tensor<Real> out(std::move(shape), x.data());
  if (tracked(tape, x)) {
    Tensor<Real> xc = x, oc = out;
    tape->record({x}, out, [xc, oc]() mutable {
      if (!oc.has_grad()) return;
      auto& gx = xc.grad_buffer();
      const auto& g = oc.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> permute(const Tensor<Real>& x, const std::vector<int>& axes,
                     Tape<Real>* tape = nullptr) {
  if (axes.size() != x.rank())
    throw std::invalid_argument("permute axes count mismatch");
  Shape out_shape(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = x.dim(axes[i]);
  const auto in_strides = row_major_strides(x.shape());
  const auto out_strides = row_major_strides(out_shape);
  Tensor<Real> out(out_shape);
  auto& od = out.data();
  const auto& xd = x.data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t src = 0, rem = i;
    for (std::size_t d = 0; d < axes.size(); ++d) {
      const std::int64_t q = rem / out_strides[d];
      rem %= out_strides[d];
      src += q * in_strides[axes[d]];
    }
    od[i] = xd[src];
  }
  if (tracked(tape, x)) {
    Tensor<Real> xc = x, oc = out;
    std::vector<int> ax = axes;
    tape->record({x}, out, [xc, oc, ax, in_strides, out_strides]() mutable {
      if (!oc.has_grad()) return;
      auto& gx = xc.grad_buffer();
      const auto& g = oc.grad();
      const std::int64_t n = xc.size();
      for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t src = 0, rem = i;
        for (std::size_t d = 0; d < ax.size(); ++d) {
          const std::int64_t q = rem / out_strides[d];
          rem %= out_strides[d];
          src += q * in_strides[ax[d]];
        }
        gx[src] += g[i];
      }
    });
  }
  return out;
}

// Concatenate along `axis`; used by the multi-branch channel merge.
template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis,
                    Tape<Real>* tape = nullptr) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size()))
    throw std::invalid_argument("concat axis out of range");
  Shape out_shape = s0;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != s0.size())
      throw std::invalid_argument("concat rank mismatch");
    for (std::size_t d = 0; d < s0.size(); ++d)
      if (static_cast<int>(d) != axis && p.dim(d) != s0[d])
        throw std::invalid_argument("concat extent mismatch off-axis");
    total += p.dim(axis);
  }
  out_shape[axis] = total;

  // outer x axis x inner layout
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  Tensor<Real> out(out_shape);
  auto& od = out.data();
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t pa = p.dim(axis);
    const auto& pd = p.data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(pd.begin() + o * pa * inner, pd.begin() + (o + 1) * pa * inner,
                od.begin() + (o * total + offset) * inner);
    offset += pa;
  }

  bool any_grad = false;
  for (const auto& p : parts) any_grad |= p.requires_grad();
  if (tape != nullptr && any_grad) {
    std::vector<Tensor<Real>> pc = parts;
    Tensor<Real> oc = out;
    tape->record(parts, out, [pc, oc, outer, inner, total]() mutable {
      if (!oc.has_grad()) return;
      const auto& g = oc.grad();
      std::int64_t offset = 0;
      for (auto& p : pc) {
        const std::int64_t paxis = p.size() / (outer * inner);
        auto& gp = p.grad_buffer();
        for (std::int64_t o = 0; o < outer; ++o)
          for (std::int64_t i = 0; i < paxis * inner; ++i)
            gp[o * paxis * inner + i] += g[(o * total + offset) * inner + i];
        offset += paxis;
      }
    });
  }
  return out;
}

// Half-open slice [start, stop) along `axis`.
template <class Real>
Tensor<Real> slice(const Tensor<Real>& x, int axis, std::int64_t start,
                   std::int64_t stop, Tape<Real>* tape = nullptr) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::invalid_argument("slice axis out of range");
  if (start < 0 || stop > s[axis] || start >= stop)
    throw std::invalid_argument("slice range [" + std::to_string(start) + "," +
                                std::to_string(stop) + ") invalid for extent " +
                                std::to_string(s[axis]));
  Shape out_shape = s;
  out_shape[axis] = stop - start;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::int64_t ax = s[axis], oax = stop - start;

  Tensor<Real> out(out_shape);
  auto& od = out.data();
  const auto& xd = x.data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy(xd.begin() + (o * ax + start) * inner,
              xd.begin() + (o * ax + stop) * inner, od.begin() + o * oax * inner);

  if (tracked(tape, x)) {
    Tensor<Real> xc = x, oc = out;
    tape->record({x}, out, [xc, oc, outer, inner, ax, oax, start]() mutable {
      if (!oc.has_grad()) return;
      const auto& g = oc.grad();
      auto& gx = xc.grad_buffer();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < oax * inner; ++i)
          gx[(o * ax + start) * inner + i] += g[o * oax * inner + i];
    });
  }
  return out;
}

}  // namespace ops

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;
using Tape32 = Tape<float>;
using Tape64 = Tape<double>;

}  // namespace mstcn
