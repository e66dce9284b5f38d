#pragma once

// Dense tensor operations with reverse-mode derivatives. Every public op
// validates shapes up front, checks its output for non-finite values, and
// (while gradients are enabled and an input is tracked) records a closure
// that scatters the output gradient back into its inputs.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swin/tensor.h"

namespace swin {

namespace detail {

template <typename T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (T x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<TensorNode<T>>> parents,
                      std::function<void(TensorNode<T>&)> backprop) {
  check_finite(value, op);
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool track = grad_enabled();
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    track = any;
  }
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Tensor<T>(std::move(n));
}

// Elementwise broadcasting over shapes aligned at the trailing axes; a size-1
// axis repeats against the other operand's extent.
struct BroadcastPlan {
  Shape out;
  std::vector<int64_t> stride_a, stride_b;
};

inline BroadcastPlan broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const int rank = static_cast<int>(std::max(a.size(), b.size()));
  BroadcastPlan plan;
  plan.out.resize(rank);
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
  for (int i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcastable");
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  plan.stride_a.assign(rank, 0);
  plan.stride_b.assign(rank, 0);
  int64_t sa = 1, sb = 1;
  for (int i = rank - 1; i >= 0; --i) {
    if (pa[i] != 1) plan.stride_a[i] = sa;
    if (pb[i] != 1) plan.stride_b[i] = sb;
    sa *= pa[i];
    sb *= pb[i];
  }
  return plan;
}

// Calls body(out_index, a_offset, b_offset) for every output element in
// row-major order.
template <typename F>
void broadcast_walk(const BroadcastPlan& plan, const F& body) {
  const int rank = static_cast<int>(plan.out.size());
  const int64_t total = shape_numel(plan.out);
  if (rank == 0) {
    body(int64_t{0}, int64_t{0}, int64_t{0});
    return;
  }
  std::vector<int64_t> idx(rank, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t o = 0; o < total; ++o) {
    body(o, oa, ob);
    for (int ax = rank - 1; ax >= 0; --ax) {
      ++idx[ax];
      oa += plan.stride_a[ax];
      ob += plan.stride_b[ax];
      if (idx[ax] < plan.out[ax]) break;
      idx[ax] = 0;
      oa -= plan.stride_a[ax] * plan.out[ax];
      ob -= plan.stride_b[ax] * plan.out[ax];
    }
  }
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> broadcast_binary(const char* op, const Tensor<T>& a, const Tensor<T>& b,
                           const Fwd& fwd, const Bwd& bwd) {
  BroadcastPlan plan = broadcast_shapes(a.shape(), b.shape(), op);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<T> out(shape_numel(plan.out));
  if (a.shape() == b.shape()) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    broadcast_walk(plan, [&](int64_t o, int64_t oa, int64_t ob) { out[o] = fwd(av[oa], bv[ob]); });
  }
  auto an = a.node();
  auto bn = b.node();
  Shape out_shape = plan.out;  // keep a copy: the lambda below consumes plan
  return make_result<T>(
      op, std::move(out_shape), std::move(out), {an, bn},
      [plan = std::move(plan), bwd](TensorNode<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        const bool ga = pa.requires_grad;
        const bool gb = pb.requires_grad;
        if (ga) pa.ensure_grad();
        if (gb) pb.ensure_grad();
        broadcast_walk(plan, [&](int64_t o, int64_t oa, int64_t ob) {
          T da, db;
          bwd(n.grad[o], pa.value[oa], pb.value[ob], da, db);
          if (ga) pa.grad[oa] += da;
          if (gb) pb.grad[ob] += db;
        });
      });
}

// c[m,n] += a[m,k] * b[k,n], row-major, accumulating. The j-inner loop keeps
// the adds independent so the compiler can vectorize without reassociation.
template <typename T>
void mm_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T aik = ai[kk];
      const T* bk = b + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

// out[k,n] += a[m,k]^T * g[m,n], accumulating.
template <typename T>
void mm_acc_at(const T* a, const T* g, T* out, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* gi = g + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T aik = ai[kk];
      T* ok = out + kk * n;
      for (int64_t j = 0; j < n; ++j) ok[j] += aik * gi[j];
    }
  }
}

template <typename T>
std::vector<T> transpose_2d(const T* src, int64_t rows, int64_t cols) {
  std::vector<T> out(rows * cols);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T g, T, T, T& da, T& db) {
        da = g;
        db = g;
      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T g, T, T, T& da, T& db) {
        da = g;
        db = -g;
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T g, T x, T y, T& da, T& db) {
        da = g * y;
        db = g * x;
      });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.data());
  for (auto& v : out) v += c;
  return detail::make_result<T>("add_scalar", a.shape(), std::move(out), {a.node()},
                                [](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
                                });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.data());
  for (auto& v : out) v *= c;
  return detail::make_result<T>("mul_scalar", a.shape(), std::move(out), {a.node()},
                                [c](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (size_t i = 0; i < n.grad.size(); ++i)
                                    p.grad[i] += n.grad[i] * c;
                                });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_scalar(a, T{-1});
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

// a: [..., m, k]. b: [..., k, n] (or [..., n, k] with transpose_b), where b is
// either rank-2 and shared across a's leading batch axes, or carries the same
// leading axes as a. Records batch*m*n*k multiply-accumulates to the active
// meter.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw ShapeError("matmul: operands must be at least rank 2, got " + shape_str(sa) + " and " +
                     shape_str(sb));
  }
  const bool shared_b = sb.size() == 2 && sa.size() > 2;
  if (!shared_b && sa.size() != sb.size()) {
    throw ShapeError("matmul: rank mismatch between " + shape_str(sa) + " and " + shape_str(sb));
  }
  if (!shared_b) {
    for (size_t i = 0; i + 2 < sa.size(); ++i) {
      if (sa[i] != sb[i]) {
        throw ShapeError("matmul: batch axes differ between " + shape_str(sa) + " and " +
                         shape_str(sb));
      }
    }
  }
  const int64_t m = sa[sa.size() - 2];
  const int64_t k = sa[sa.size() - 1];
  const int64_t bk = transpose_b ? sb[sb.size() - 1] : sb[sb.size() - 2];
  const int64_t n = transpose_b ? sb[sb.size() - 2] : sb[sb.size() - 1];
  if (bk != k) {
    throw ShapeError("matmul: inner dimensions differ between " + shape_str(sa) + " and " +
                     shape_str(sb) + (transpose_b ? " (transposed)" : ""));
  }
  int64_t batch = 1;
  for (size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];

  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(batch * m * n, T{0});
  const auto& av = a.data();
  const auto& bv = b.data();

  // Pre-transpose b so a single accumulate kernel serves both layouts.
  std::vector<std::vector<T>> bt;
  const int64_t b_batches = shared_b ? 1 : batch;
  if (transpose_b) {
    bt.reserve(b_batches);
    for (int64_t i = 0; i < b_batches; ++i)
      bt.push_back(detail::transpose_2d(bv.data() + i * n * k, n, k));
  }
  parallel_for(batch, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const T* bp = transpose_b ? bt[shared_b ? 0 : i].data()
                                : bv.data() + (shared_b ? 0 : i) * k * n;
      detail::mm_acc(av.data() + i * m * k, bp, out.data() + i * m * n, m, k, n);
    }
  });
  record_macs(static_cast<uint64_t>(batch) * m * n * k);

  return detail::make_result<T>(
      "matmul", std::move(out_shape), std::move(out), {a.node(), b.node()},
      [m, k, n, batch, shared_b, transpose_b](TensorNode<T>& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int64_t i = 0; i < batch; ++i) {
          const T* g = nd.grad.data() + i * m * n;
          const T* av = pa.value.data() + i * m * k;
          const int64_t boff = shared_b ? 0 : i * k * n;  // b holds k*n values either layout
          const T* bv = pb.value.data() + boff;
          if (!transpose_b) {
            if (pa.requires_grad) {
              // da += g * b^T
              auto tb = detail::transpose_2d(bv, k, n);
              detail::mm_acc(g, tb.data(), pa.grad.data() + i * m * k, m, n, k);
            }
            if (pb.requires_grad) {
              // db += a^T * g
              detail::mm_acc_at(av, g, pb.grad.data() + boff, m, k, n);
            }
          } else {
            if (pa.requires_grad) {
              // c = a * b^T with b stored [n, k]  =>  da += g * b
              detail::mm_acc(g, bv, pa.grad.data() + i * m * k, m, n, k);
            }
            if (pb.requires_grad) {
              // db += g^T * a, shape [n, k]
              detail::mm_acc_at(g, av, pb.grad.data() + boff, m, n, k);
            }
          }
        }
      });
}

// y = x W^T + b with W stored [out_features, in_features]. Pass an empty
// (default-constructed) bias to skip it.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = Tensor<T>()) {
  Tensor<T> y = matmul(x, w, /*transpose_b=*/true);
  if (b.defined()) {
    if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
      throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match weight " +
                       shape_str(w.shape()));
    }
    y = add(y, b);
  }
  return y;
}

// ---------------------------------------------------------------------------
// Layout ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one -1 in " + shape_str(shape));
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || a.numel() % known != 0) {
      throw ShapeError("reshape: cannot infer axis for " + shape_str(a.shape()) + " -> " +
                       shape_str(shape));
    }
    shape[infer] = a.numel() / known;
  } else if (known != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " has " + std::to_string(a.numel()) +
                     " elements, target " + shape_str(shape) + " has " + std::to_string(known));
  }
  return detail::make_result<T>("reshape", std::move(shape), a.data(), {a.node()},
                                [](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
                                });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, std::vector<int> axes) {
  const Shape& s = a.shape();
  const int rank = static_cast<int>(s.size());
  if (static_cast<int>(axes.size()) != rank) {
    throw ShapeError("permute: got " + std::to_string(axes.size()) + " axes for rank " +
                     std::to_string(rank) + " tensor");
  }
  std::vector<bool> seen(rank, false);
  for (int ax : axes) {
    if (ax < 0 || ax >= rank || seen[ax]) {
      throw ShapeError("permute: axes are not a permutation of 0.." + std::to_string(rank - 1));
    }
    seen[ax] = true;
  }
  Shape out_shape(rank);
  for (int i = 0; i < rank; ++i) out_shape[i] = s[axes[i]];

  std::vector<int64_t> in_strides(rank, 1);
  for (int i = rank - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * s[i + 1];
  // Stride to advance in the source when output axis i increments.
  std::vector<int64_t> src_stride(rank);
  for (int i = 0; i < rank; ++i) src_stride[i] = in_strides[axes[i]];

  const auto& av = a.data();
  std::vector<T> out(av.size());
  std::vector<int64_t> idx(rank, 0);
  int64_t src = 0;
  for (int64_t o = 0; o < static_cast<int64_t>(out.size()); ++o) {
    out[o] = av[src];
    for (int ax = rank - 1; ax >= 0; --ax) {
      ++idx[ax];
      src += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      idx[ax] = 0;
      src -= src_stride[ax] * out_shape[ax];
    }
  }
  return detail::make_result<T>(
      "permute", std::move(out_shape), std::move(out), {a.node()},
      [src_stride, shape = Shape()](TensorNode<T>& n) mutable {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const int rank = static_cast<int>(n.shape.size());
        std::vector<int64_t> idx(rank, 0);
        int64_t src = 0;
        for (int64_t o = 0; o < n.numel(); ++o) {
          p.grad[src] += n.grad[o];
          for (int ax = rank - 1; ax >= 0; --ax) {
            ++idx[ax];
            src += src_stride[ax];
            if (idx[ax] < n.shape[ax]) break;
            idx[ax] = 0;
            src -= src_stride[ax] * n.shape[ax];
          }
        }
      });
}

// Contiguous slice [start, start+len) along `axis`.
template <typename T>
Tensor<T> slice_axis(const Tensor<T>& a, int axis, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("slice_axis: axis out of range for " + shape_str(s));
  }
  if (start < 0 || len <= 0 || start + len > s[axis]) {
    throw ShapeError("slice_axis: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") invalid for axis " + std::to_string(axis) +
                     " of " + shape_str(s));
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const int64_t extent = s[axis];

  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<T> out(outer * len * inner);
  const auto& av = a.data();
  for (int64_t o = 0; o < outer; ++o) {
    const T* srow = av.data() + (o * extent + start) * inner;
    std::copy(srow, srow + len * inner, out.data() + o * len * inner);
  }
  return detail::make_result<T>(
      "slice_axis", std::move(out_shape), std::move(out), {a.node()},
      [outer, inner, extent, start, len](TensorNode<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          T* drow = p.grad.data() + (o * extent + start) * inner;
          const T* grow = n.grad.data() + o * len * inner;
          for (int64_t i = 0; i < len * inner; ++i) drow[i] += grow[i];
        }
      });
}

// out[i][j][...] = x[(i - dy) mod h][(j - dx) mod w][...] over the first two
// axes; trailing axes ride along unchanged.
template <typename T>
Tensor<T> roll2d(const Tensor<T>& a, int64_t dy, int64_t dx) {
  const Shape& s = a.shape();
  if (s.size() < 2) {
    throw ShapeError("roll2d: need at least rank 2, got " + shape_str(s));
  }
  const int64_t h = s[0], w = s[1];
  int64_t inner = 1;
  for (size_t i = 2; i < s.size(); ++i) inner *= s[i];
  auto wrap = [](int64_t v, int64_t m) { return ((v % m) + m) % m; };
  const int64_t ry = wrap(dy, h), rx = wrap(dx, w);

  const auto& av = a.data();
  std::vector<T> out(av.size());
  for (int64_t i = 0; i < h; ++i) {
    const int64_t si = wrap(i - ry, h);
    for (int64_t j = 0; j < w; ++j) {
      const int64_t sj = wrap(j - rx, w);
      const T* srow = av.data() + (si * w + sj) * inner;
      std::copy(srow, srow + inner, out.data() + (i * w + j) * inner);
    }
  }
  return detail::make_result<T>("roll2d", s, std::move(out), {a.node()},
                                [h, w, inner, ry, rx](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (int64_t i = 0; i < h; ++i) {
                                    const int64_t si = (i - ry + h) % h;
                                    for (int64_t j = 0; j < w; ++j) {
                                      const int64_t sj = (j - rx + w) % w;
                                      T* drow = p.grad.data() + (si * w + sj) * inner;
                                      const T* grow = n.grad.data() + (i * w + j) * inner;
                                      for (int64_t c = 0; c < inner; ++c) drow[c] += grow[c];
                                    }
                                  }
                                });
}

// Zero-pads a [h, w, C] map at the bottom/right to [new_h, new_w, C].
template <typename T>
Tensor<T> pad_hw(const Tensor<T>& a, int64_t new_h, int64_t new_w) {
  const Shape& s = a.shape();
  if (s.size() != 3) throw ShapeError("pad_hw: expected [h, w, C], got " + shape_str(s));
  const int64_t h = s[0], w = s[1], c = s[2];
  if (new_h < h || new_w < w) {
    throw ShapeError("pad_hw: target " + std::to_string(new_h) + "x" + std::to_string(new_w) +
                     " smaller than input " + shape_str(s));
  }
  std::vector<T> out(new_h * new_w * c, T{0});
  const auto& av = a.data();
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const T* srow = av.data() + (i * w + j) * c;
      std::copy(srow, srow + c, out.data() + (i * new_w + j) * c);
    }
  return detail::make_result<T>("pad_hw", Shape{new_h, new_w, c}, std::move(out), {a.node()},
                                [h, w, c, new_w](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (int64_t i = 0; i < h; ++i)
                                    for (int64_t j = 0; j < w; ++j) {
                                      T* drow = p.grad.data() + (i * w + j) * c;
                                      const T* grow = n.grad.data() + (i * new_w + j) * c;
                                      for (int64_t ch = 0; ch < c; ++ch) drow[ch] += grow[ch];
                                    }
                                });
}

// Keeps the top-left [h, w] corner of a [H, W, C] map.
template <typename T>
Tensor<T> crop_hw(const Tensor<T>& a, int64_t h, int64_t w) {
  const Shape& s = a.shape();
  if (s.size() != 3) throw ShapeError("crop_hw: expected [H, W, C], got " + shape_str(s));
  const int64_t bh = s[0], bw = s[1], c = s[2];
  if (h > bh || w > bw || h <= 0 || w <= 0) {
    throw ShapeError("crop_hw: target " + std::to_string(h) + "x" + std::to_string(w) +
                     " invalid for input " + shape_str(s));
  }
  std::vector<T> out(h * w * c);
  const auto& av = a.data();
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const T* srow = av.data() + (i * bw + j) * c;
      std::copy(srow, srow + c, out.data() + (i * w + j) * c);
    }
  return detail::make_result<T>("crop_hw", Shape{h, w, c}, std::move(out), {a.node()},
                                [h, w, c, bw](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (int64_t i = 0; i < h; ++i)
                                    for (int64_t j = 0; j < w; ++j) {
                                      T* drow = p.grad.data() + (i * bw + j) * c;
                                      const T* grow = n.grad.data() + (i * w + j) * c;
                                      for (int64_t ch = 0; ch < c; ++ch) drow[ch] += grow[ch];
                                    }
                                });
}

// Gathers rows of a [N, C] matrix: out[i] = x[idx[i]], with idx[i] == -1
// producing an all-zero row (used for out-of-range slots). Backward
// scatter-adds into the selected rows; -1 rows contribute nothing.
template <typename T>
Tensor<T> index_select_rows(const Tensor<T>& a, std::vector<int64_t> idx) {
  const Shape& s = a.shape();
  if (s.size() != 2) {
    throw ShapeError("index_select_rows: expected [N, C], got " + shape_str(s));
  }
  const int64_t rows = s[0], c = s[1];
  for (int64_t i : idx) {
    if (i < -1 || i >= rows) {
      throw ShapeError("index_select_rows: index " + std::to_string(i) + " out of range for " +
                       std::to_string(rows) + " rows");
    }
  }
  const int64_t k = static_cast<int64_t>(idx.size());
  std::vector<T> out(k * c, T{0});
  const auto& av = a.data();
  for (int64_t i = 0; i < k; ++i) {
    if (idx[i] >= 0) {
      const T* srow = av.data() + idx[i] * c;
      std::copy(srow, srow + c, out.data() + i * c);
    }
  }
  return detail::make_result<T>("index_select_rows", Shape{k, c}, std::move(out), {a.node()},
                                [idx = std::move(idx), c](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (size_t i = 0; i < idx.size(); ++i) {
                                    if (idx[i] < 0) continue;
                                    T* drow = p.grad.data() + idx[i] * c;
                                    const T* grow = n.grad.data() + i * c;
                                    for (int64_t ch = 0; ch < c; ++ch) drow[ch] += grow[ch];
                                  }
                                });
}

// Gathers along the last axis: out[..., j] = x[..., idx[j]].
template <typename T>
Tensor<T> gather_last(const Tensor<T>& a, std::vector<int64_t> idx) {
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("gather_last: scalar input");
  const int64_t extent = s.back();
  for (int64_t i : idx) {
    if (i < 0 || i >= extent) {
      throw ShapeError("gather_last: index " + std::to_string(i) + " out of range for axis of " +
                       std::to_string(extent));
    }
  }
  int64_t outer = 1;
  for (size_t i = 0; i + 1 < s.size(); ++i) outer *= s[i];
  const int64_t k = static_cast<int64_t>(idx.size());
  Shape out_shape = s;
  out_shape.back() = k;
  std::vector<T> out(outer * k);
  const auto& av = a.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < k; ++j) out[o * k + j] = av[o * extent + idx[j]];
  return detail::make_result<T>("gather_last", std::move(out_shape), std::move(out), {a.node()},
                                [idx = std::move(idx), outer, extent](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  const int64_t k = static_cast<int64_t>(idx.size());
                                  for (int64_t o = 0; o < outer; ++o)
                                    for (int64_t j = 0; j < k; ++j)
                                      p.grad[o * extent + idx[j]] += n.grad[o * k + j];
                                });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc{0};
  for (T v : a.data()) acc += v;
  return detail::make_result<T>("sum_all", Shape{1}, std::vector<T>{acc}, {a.node()},
                                [](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (auto& g : p.grad) g += n.grad[0];
                                });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return mul_scalar(sum_all(a), T{1} / static_cast<T>(a.numel()));
}

// Column means of a [N, C] matrix, kept as [1, C].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("mean_rows: expected [N, C], got " + shape_str(s));
  const int64_t rows = s[0], c = s[1];
  std::vector<T> out(c, T{0});
  const auto& av = a.data();
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < c; ++j) out[j] += av[i * c + j];
  const T inv = T{1} / static_cast<T>(rows);
  for (auto& v : out) v *= inv;
  return detail::make_result<T>("mean_rows", Shape{1, c}, std::move(out), {a.node()},
                                [rows, c, inv](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (int64_t i = 0; i < rows; ++i)
                                    for (int64_t j = 0; j < c; ++j)
                                      p.grad[i * c + j] += n.grad[j] * inv;
                                });
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization
// ---------------------------------------------------------------------------

// Softmax along `axis` with max subtraction, so large negative mask values
// underflow to exactly zero probability instead of producing NaN.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis = -1) {
  const Shape& s = a.shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("softmax: axis out of range for " + shape_str(s));
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const int64_t extent = s[axis];

  const auto& av = a.data();
  std::vector<T> out(av.size());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * extent * inner + in;
      T mx = av[base];
      for (int64_t e = 1; e < extent; ++e) mx = std::max(mx, av[base + e * inner]);
      T denom{0};
      for (int64_t e = 0; e < extent; ++e) {
        const T ex = std::exp(av[base + e * inner] - mx);
        out[base + e * inner] = ex;
        denom += ex;
      }
      const T inv = T{1} / denom;
      for (int64_t e = 0; e < extent; ++e) out[base + e * inner] *= inv;
    }
  }
  return detail::make_result<T>(
      "softmax", s, std::move(out), {a.node()}, [outer, inner, extent](TensorNode<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * extent * inner + in;
            T dot{0};
            for (int64_t e = 0; e < extent; ++e)
              dot += n.grad[base + e * inner] * n.value[base + e * inner];
            for (int64_t e = 0; e < extent; ++e) {
              const int64_t ix = base + e * inner;
              p.grad[ix] += n.value[ix] * (n.grad[ix] - dot);
            }
          }
      });
}

// Normalizes the last axis to zero mean / unit variance (population variance,
// i.e. divide by C), then applies the elementwise affine gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = static_cast<T>(1e-5)) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("layer_norm: scalar input");
  const int64_t c = s.back();
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c) {
    throw ShapeError("layer_norm: affine shapes " + shape_str(gamma.shape()) + ", " +
                     shape_str(beta.shape()) + " do not match feature size " + std::to_string(c));
  }
  int64_t rows = 1;
  for (size_t i = 0; i + 1 < s.size(); ++i) rows *= s[i];

  const auto& xv = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  std::vector<T> out(xv.size());
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * c;
    T mean{0};
    for (int64_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<T>(c);
    T var{0};
    for (int64_t j = 0; j < c; ++j) {
      const T d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T inv = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (int64_t j = 0; j < c; ++j) {
      const T xh = (row[j] - mean) * inv;
      (*xhat)[r * c + j] = xh;
      out[r * c + j] = xh * gv[j] + bv[j];
    }
  }
  return detail::make_result<T>(
      "layer_norm", s, std::move(out), {x.node(), gamma.node(), beta.node()},
      [rows, c, xhat, inv_std](TensorNode<T>& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        const auto& gv = pg.value;
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t base = r * c;
          if (pg.requires_grad || pb.requires_grad) {
            for (int64_t j = 0; j < c; ++j) {
              if (pg.requires_grad) pg.grad[j] += n.grad[base + j] * (*xhat)[base + j];
              if (pb.requires_grad) pb.grad[j] += n.grad[base + j];
            }
          }
          if (!px.requires_grad) continue;
          T sum_dxh{0}, sum_dxh_xh{0};
          for (int64_t j = 0; j < c; ++j) {
            const T dxh = n.grad[base + j] * gv[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * (*xhat)[base + j];
          }
          const T inv = (*inv_std)[r];
          const T cn = static_cast<T>(c);
          for (int64_t j = 0; j < c; ++j) {
            const T dxh = n.grad[base + j] * gv[j];
            px.grad[base + j] +=
                inv / cn * (cn * dxh - sum_dxh - (*xhat)[base + j] * sum_dxh_xh);
          }
        }
      });
}

// Exact (erf-based) GELU: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  const auto& av = a.data();
  std::vector<T> out(av.size());
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  for (size_t i = 0; i < av.size(); ++i) {
    const double x = static_cast<double>(av[i]);
    out[i] = static_cast<T>(x * 0.5 * (1.0 + std::erf(x * kInvSqrt2)));
  }
  return detail::make_result<T>(
      "gelu", a.shape(), std::move(out), {a.node()}, [](TensorNode<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        constexpr double kInvSqrt2 = 0.7071067811865475244;
        constexpr double kInvSqrt2Pi = 0.3989422804014326779;
        for (size_t i = 0; i < n.grad.size(); ++i) {
          const double x = static_cast<double>(p.value[i]);
          const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          p.grad[i] += n.grad[i] * static_cast<T>(phi + x * pdf);
        }
      });
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Mean negative log-likelihood of integer labels under softmax(logits).
// Computed via log-sum-exp with max subtraction.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2) {
    throw ShapeError("cross_entropy: expected logits [N, K], got " + shape_str(s));
  }
  const int64_t rows = s[0], k = s[1];
  if (static_cast<int64_t>(labels.size()) != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " logit rows");
  }
  for (int64_t y : labels) {
    if (y < 0 || y >= k) {
      throw ShapeError("cross_entropy: label " + std::to_string(y) + " out of range for " +
                       std::to_string(k) + " classes");
    }
  }
  const auto& lv = logits.data();
  auto probs = std::make_shared<std::vector<T>>(lv.size());
  T loss{0};
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = lv.data() + r * k;
    T mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T denom{0};
    for (int64_t j = 0; j < k; ++j) {
      const T ex = std::exp(row[j] - mx);
      (*probs)[r * k + j] = ex;
      denom += ex;
    }
    const T inv = T{1} / denom;
    for (int64_t j = 0; j < k; ++j) (*probs)[r * k + j] *= inv;
    loss += std::log(denom) + mx - row[labels[r]];
  }
  loss /= static_cast<T>(rows);
  return detail::make_result<T>(
      "cross_entropy", Shape{1}, std::vector<T>{loss}, {logits.node()},
      [probs, labels, rows, k](TensorNode<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const T g = n.grad[0] / static_cast<T>(rows);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < k; ++j) {
            T d = (*probs)[r * k + j];
            if (j == labels[r]) d -= T{1};
            p.grad[r * k + j] += g * d;
          }
      });
}

}  // namespace swin
