#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/gemm.hpp"
#include "lipnet/tape.hpp"
#include "lipnet/tensor.hpp"

// Differentiable primitives. Each op computes its value eagerly and records the
// adjoint rule on the operands' tape.
namespace lipnet::ops {

namespace detail {

template <std::floating_point T>
void require_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

template <std::floating_point T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require_same_tape(a, b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
}

inline std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

template <std::floating_point T, class F, class G>
Var<T> unary(const char* name, const Var<T>& x, F f, G dfdx) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const Var<T> xin = x;
  return x.tape().record(name, std::move(out), x.requires_grad(),
                         [xin, dfdx](Tape<T>& tape, const Tensor<T>& g) {
                           Tensor<T>* gx = tape.grad_sink(xin);
                           const Tensor<T>& xv = xin.value();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             (*gx)[i] += g[i] * dfdx(xv[i]);
                           }
                         });
}

}  // namespace detail

template <std::floating_point T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  out += b.value();
  return a.tape().record("add", std::move(out), a.requires_grad() || b.requires_grad(),
                         [a, b](Tape<T>& tape, const Tensor<T>& g) {
                           if (auto* ga = tape.grad_sink(a)) *ga += g;
                           if (auto* gb = tape.grad_sink(b)) *gb += g;
                         });
}

template <std::floating_point T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "sub");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape().record("sub", std::move(out), a.requires_grad() || b.requires_grad(),
                         [a, b](Tape<T>& tape, const Tensor<T>& g) {
                           if (auto* ga = tape.grad_sink(a)) *ga += g;
                           if (auto* gb = tape.grad_sink(b)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                           }
                         });
}

// Element-wise product.
template <std::floating_point T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "mul");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record("mul", std::move(out), a.requires_grad() || b.requires_grad(),
                         [a, b](Tape<T>& tape, const Tensor<T>& g) {
                           const Tensor<T>& av = a.value();
                           const Tensor<T>& bv = b.value();
                           if (auto* ga = tape.grad_sink(a)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
                           }
                           if (auto* gb = tape.grad_sink(b)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
                           }
                         });
}

template <std::floating_point T>
Var<T> scale(const Var<T>& a, T s) {
  return detail::unary<T>("scale", a, [s](T v) { return s * v; }, [s](T) { return s; });
}

template <std::floating_point T>
Var<T> relu(const Var<T>& x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T v) { return v > T{0} ? T{1} : T{0}; });
}

template <std::floating_point T>
Var<T> sigmoid(const Var<T>& x) {
  const auto sig = [](T v) { return T{1} / (T{1} + std::exp(-v)); };
  return detail::unary<T>("sigmoid", x, sig, [sig](T v) {
    const T s = sig(v);
    return s * (T{1} - s);
  });
}

template <std::floating_point T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary<T>("tanh", x, [](T v) { return std::tanh(v); }, [](T v) {
    const T t = std::tanh(v);
    return T{1} - t * t;
  });
}

// Sum of all elements, shape [1].
template <std::floating_point T>
Var<T> sum(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  T s = 0;
  for (T v : xv.data()) s += v;
  return x.tape().record("sum", Tensor<T>::scalar(s), x.requires_grad(),
                         [x](Tape<T>& tape, const Tensor<T>& g) {
                           Tensor<T>* gx = tape.grad_sink(x);
                           for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g[0];
                         });
}

template <std::floating_point T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), x.requires_grad(),
                         [x](Tape<T>& tape, const Tensor<T>& g) {
                           Tensor<T>* gx = tape.grad_sink(x);
                           for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                         });
}

namespace detail {

// Visits every element of `in` with its flat offset in the permuted layout.
template <class F>
void for_each_permuted(const Shape& in_shape, const std::vector<std::size_t>& axes, F&& f) {
  const std::size_t rank = in_shape.size();
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];
  // Stride in the output for each input axis.
  std::vector<std::size_t> out_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) out_stride[i - 1] = out_stride[i] * out_shape[i];
  std::vector<std::size_t> stride_for_in(rank);
  for (std::size_t i = 0; i < rank; ++i) stride_for_in[axes[i]] = out_stride[i];

  std::vector<std::size_t> idx(rank, 0);
  const std::size_t n = numel(in_shape);
  std::size_t out_off = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    f(flat, out_off);
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < in_shape[ax]) {
        out_off += stride_for_in[ax];
        break;
      }
      out_off -= (in_shape[ax] - 1) * stride_for_in[ax];
      idx[ax] = 0;
    }
  }
}

}  // namespace detail

// Reorders axes: output axis i is input axis axes[i].
template <std::floating_point T>
Var<T> permute(const Var<T>& x, std::vector<std::size_t> axes) {
  const Shape& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (axes.size() != rank) throw DimensionError("permute: axis list does not match rank");
  std::vector<bool> seen(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank || seen[a]) throw DimensionError("permute: invalid axis permutation");
    seen[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];
  const Tensor<T>& xv = x.value();
  Tensor<T> out(out_shape);
  detail::for_each_permuted(in_shape, axes,
                            [&](std::size_t in_off, std::size_t out_off) { out[out_off] = xv[in_off]; });
  return x.tape().record("permute", std::move(out), x.requires_grad(),
                         [x, axes](Tape<T>& tape, const Tensor<T>& g) {
                           Tensor<T>* gx = tape.grad_sink(x);
                           detail::for_each_permuted(
                               gx->shape(), axes,
                               [&](std::size_t in_off, std::size_t out_off) { (*gx)[in_off] += g[out_off]; });
                         });
}

// Elements [begin, end) along `axis`.
template <std::floating_point T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid on axis " + std::to_string(axis) + " of " + to_string(s));
  }
  const std::size_t outer = detail::prod(s, 0, axis);
  const std::size_t inner = detail::prod(s, axis + 1, s.size());
  const std::size_t len = end - begin;
  Shape out_shape = s;
  out_shape[axis] = len;
  const Tensor<T>& xv = x.value();
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = xv.raw() + (o * s[axis] + begin) * inner;
    std::copy(src, src + len * inner, out.raw() + o * len * inner);
  }
  const std::size_t full = s[axis];
  return x.tape().record("slice", std::move(out), x.requires_grad(),
                         [x, outer, inner, len, full, begin](Tape<T>& tape, const Tensor<T>& g) {
                           Tensor<T>* gx = tape.grad_sink(x);
                           for (std::size_t o = 0; o < outer; ++o) {
                             T* dst = gx->raw() + (o * full + begin) * inner;
                             const T* src = g.raw() + o * len * inner;
                             for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                           }
                         });
}

// Joins tensors that agree on every axis except `axis`.
template <std::floating_point T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range");
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_same_tape(parts[0], p, "concat");
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == s0[i];
    if (!ok) throw DimensionError("concat: shapes " + to_string(s0) + " and " + to_string(s));
    total += s[axis];
    rg = rg || p.requires_grad();
  }
  const std::size_t outer = detail::prod(s0, 0, axis);
  const std::size_t inner = detail::prod(s0, axis + 1, s0.size());
  Shape out_shape = s0;
  out_shape[axis] = total;
  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.shape()[axis];
    const Tensor<T>& pv = p.value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(pv.raw() + o * len * inner, pv.raw() + (o + 1) * len * inner,
                out.raw() + (o * total + offset) * inner);
    }
    offset += len;
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(
      "concat", std::move(out), rg, [inputs, axis, outer, inner, total](Tape<T>& tape, const Tensor<T>& g) {
        std::size_t offset = 0;
        for (const auto& p : inputs) {
          const std::size_t len = p.shape()[axis];
          if (auto* gp = tape.grad_sink(p)) {
            for (std::size_t o = 0; o < outer; ++o) {
              const T* src = g.raw() + (o * total + offset) * inner;
              T* dst = gp->raw() + o * len * inner;
              for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
          }
          offset += len;
        }
      });
}

template <std::floating_point T>
Var<T> concat(std::initializer_list<Var<T>> parts, std::size_t axis) {
  return concat<T>(std::span<const Var<T>>(parts.begin(), parts.size()), axis);
}

// C[m,n] = A[m,k] * B[k,n].
template <std::floating_point T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw DimensionError("matmul: shapes " + to_string(sa) + " and " + to_string(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor<T> out(Shape{m, n});
  blas::gemm(blas::Trans::no, blas::Trans::no, m, n, k, T{1}, a.value().raw(), k, b.value().raw(), n,
             T{0}, out.raw(), n);
  return a.tape().record("matmul", std::move(out), a.requires_grad() || b.requires_grad(),
                         [a, b, m, n, k](Tape<T>& tape, const Tensor<T>& g) {
                           if (auto* ga = tape.grad_sink(a)) {  // dA = dC B^T
                             blas::gemm(blas::Trans::no, blas::Trans::yes, m, k, n, T{1}, g.raw(), n,
                                        b.value().raw(), n, T{1}, ga->raw(), k);
                           }
                           if (auto* gb = tape.grad_sink(b)) {  // dB = A^T dC
                             blas::gemm(blas::Trans::yes, blas::Trans::no, k, n, m, T{1},
                                        a.value().raw(), k, g.raw(), n, T{1}, gb->raw(), n);
                           }
                         });
}

// y[m,o] = x[m,i] * W[o,i]^T + b[o]; the bias is optional.
template <std::floating_point T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& b) {
  detail::require_same_tape(x, w, "linear");
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[1]) {
    throw DimensionError("linear: input " + to_string(sx) + " with weight " + to_string(sw));
  }
  const std::size_t m = sx[0], in = sx[1], o = sw[0];
  if (b && (b->shape().size() != 1 || b->shape()[0] != o)) {
    throw DimensionError("linear: bias " + to_string(b->shape()) + " for weight " + to_string(sw));
  }
  Tensor<T> out(Shape{m, o});
  if (b) {
    const Tensor<T>& bv = b->value();
    for (std::size_t r = 0; r < m; ++r) std::copy(bv.raw(), bv.raw() + o, out.raw() + r * o);
  }
  blas::gemm(blas::Trans::no, blas::Trans::yes, m, o, in, T{1}, x.value().raw(), in, w.value().raw(),
             in, b ? T{1} : T{0}, out.raw(), o);
  const bool rg = x.requires_grad() || w.requires_grad() || (b && b->requires_grad());
  return x.tape().record("linear", std::move(out), rg, [x, w, b, m, in, o](Tape<T>& tape, const Tensor<T>& g) {
    if (auto* gx = tape.grad_sink(x)) {  // dX = dY W
      blas::gemm(blas::Trans::no, blas::Trans::no, m, in, o, T{1}, g.raw(), o, w.value().raw(), in, T{1},
                 gx->raw(), in);
    }
    if (auto* gw = tape.grad_sink(w)) {  // dW = dY^T X
      blas::gemm(blas::Trans::yes, blas::Trans::no, o, in, m, T{1}, g.raw(), o, x.value().raw(), in, T{1},
                 gw->raw(), in);
    }
    if (b) {
      if (auto* gb = tape.grad_sink(*b)) {
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < o; ++j) (*gb)[j] += g[r * o + j];
        }
      }
    }
  });
}

template <std::floating_point T>
Var<T> linear(const Var<T>& x, const Var<T>& w) {
  return linear<T>(x, w, std::nullopt);
}

template <std::floating_point T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return linear<T>(x, w, std::optional<Var<T>>(b));
}

// Mean over every axis after the first two: [N, C, ...] -> [N, C].
template <std::floating_point T>
Var<T> mean_pool(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() < 3) throw DimensionError("mean_pool: expected [N, C, ...], got " + to_string(s));
  const std::size_t rows = s[0] * s[1];
  const std::size_t len = detail::prod(s, 2, s.size());
  const Tensor<T>& xv = x.value();
  Tensor<T> out(Shape{s[0], s[1]});
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t i = 0; i < len; ++i) acc += xv[r * len + i];
    out[r] = acc / static_cast<T>(len);
  }
  return x.tape().record("mean_pool", std::move(out), x.requires_grad(),
                         [x, rows, len](Tape<T>& tape, const Tensor<T>& g) {
                           Tensor<T>* gx = tape.grad_sink(x);
                           const T inv = T{1} / static_cast<T>(len);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t i = 0; i < len; ++i) (*gx)[r * len + i] += g[r] * inv;
                           }
                         });
}

}  // namespace lipnet::ops
