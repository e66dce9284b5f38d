#pragma once

// Window-based multi-head self-attention with relative position bias, the
// three execution strategies for the shifted configuration (cyclic-shift
// batching, naive padding, and a loop-based reference), and the per-pixel
// sliding-window baseline they are benchmarked against.

#include "swin/windowing.h"

namespace swin {

// Position-information modes. `rel_no_app` keeps only the bias term in the
// logits (the appearance dot-product is dropped, unscaled softmax(B)).
enum class PosMode { none, abs, rel, abs_rel, rel_no_app };

inline bool pos_uses_bias(PosMode m) {
  return m == PosMode::rel || m == PosMode::abs_rel || m == PosMode::rel_no_app;
}
inline bool pos_uses_dot(PosMode m) { return m != PosMode::rel_no_app; }
inline bool pos_uses_abs(PosMode m) { return m == PosMode::abs || m == PosMode::abs_rel; }

inline const char* pos_mode_name(PosMode m) {
  switch (m) {
    case PosMode::none: return "none";
    case PosMode::abs: return "abs";
    case PosMode::rel: return "rel";
    case PosMode::abs_rel: return "abs+rel";
    case PosMode::rel_no_app: return "rel-no-app";
  }
  return "?";
}

template <typename T>
struct WindowAttentionParams {
  int64_t dim = 0, num_heads = 0, head_dim = 0, M = 0;
  PosMode pos = PosMode::rel;
  Tensor<T> qkv_w;       // [3C, C]
  Tensor<T> qkv_b;       // [3C]
  Tensor<T> proj_w;      // [C, C]
  Tensor<T> proj_b;      // [C]
  Tensor<T> bias_table;  // [numHeads, (2M-1)^2]

  static WindowAttentionParams zeros(int64_t dim, int64_t heads, int64_t M,
                                     PosMode pos = PosMode::rel) {
    WindowAttentionParams p = shell(dim, heads, M, pos);
    p.qkv_w = Tensor<T>::zeros({3 * dim, dim});
    p.proj_w = Tensor<T>::zeros({dim, dim});
    p.bias_table = Tensor<T>::zeros({heads, (2 * M - 1) * (2 * M - 1)});
    return p;
  }

  // Truncated-normal weights (std 0.02), zero biases.
  static WindowAttentionParams random(int64_t dim, int64_t heads, int64_t M, PosMode pos,
                                      std::mt19937_64& rng) {
    WindowAttentionParams p = shell(dim, heads, M, pos);
    const T std02 = static_cast<T>(0.02);
    p.qkv_w = Tensor<T>::trunc_normal({3 * dim, dim}, rng, std02);
    p.proj_w = Tensor<T>::trunc_normal({dim, dim}, rng, std02);
    p.bias_table = Tensor<T>::trunc_normal({heads, (2 * M - 1) * (2 * M - 1)}, rng, std02);
    return p;
  }

 private:
  static WindowAttentionParams shell(int64_t dim, int64_t heads, int64_t M, PosMode pos) {
    if (heads < 1 || dim % heads != 0) {
      throw ShapeError("window attention: dim " + std::to_string(dim) +
                       " is not divisible into " + std::to_string(heads) + " heads");
    }
    WindowAttentionParams p;
    p.dim = dim;
    p.num_heads = heads;
    p.head_dim = dim / heads;
    p.M = M;
    p.pos = pos;
    p.qkv_b = Tensor<T>::zeros({3 * dim});
    p.proj_b = Tensor<T>::zeros({dim});
    return p;
  }
};

// The bias matrix each head adds to its logits: table entries gathered
// through the relative-position index, shape [numHeads, M^2, M^2].
template <typename T>
Tensor<T> gathered_bias(const WindowAttentionParams<T>& p) {
  const RelPosIndex& idx = cached_rel_pos_index(p.M);
  auto flat = gather_last(p.bias_table, idx.index);  // [H, M^4]
  return reshape(flat, {p.num_heads, p.M * p.M, p.M * p.M});
}

// ---------------------------------------------------------------------------
// Core attention over batched windows.
// tokens: [numWindows, M^2, C]; additive_mask: empty, or [numWindows, M^2, M^2]
// added to every head's logits before softmax.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> window_attention(const Tensor<T>& tokens, const WindowAttentionParams<T>& p,
                           const Tensor<T>& additive_mask = Tensor<T>()) {
  const Shape& s = tokens.shape();
  if (s.size() != 3 || s[2] != p.dim) {
    throw ShapeError("window_attention: tokens " + shape_str(s) + " do not match dim " +
                     std::to_string(p.dim));
  }
  const int64_t nw = s[0], n = s[1], heads = p.num_heads, d = p.head_dim;
  if (n != p.M * p.M) {
    throw ShapeError("window_attention: " + std::to_string(n) + " tokens per window, expected " +
                     std::to_string(p.M * p.M));
  }
  if (additive_mask.defined() &&
      additive_mask.shape() != Shape{nw, n, n}) {
    throw ShapeError("window_attention: mask " + shape_str(additive_mask.shape()) +
                     " does not match windows " + shape_str(s));
  }

  auto qkv = linear(tokens, p.qkv_w, p.qkv_b);  // [nw, n, 3C]
  auto split_heads = [&](Tensor<T> t) {
    return permute(reshape(t, {nw, n, heads, d}), {0, 2, 1, 3});  // [nw, H, n, d]
  };
  auto q = split_heads(slice_axis(qkv, 2, 0, p.dim));
  auto k = split_heads(slice_axis(qkv, 2, p.dim, p.dim));
  auto v = split_heads(slice_axis(qkv, 2, 2 * p.dim, p.dim));

  Tensor<T> logits;
  if (pos_uses_dot(p.pos)) {
    logits = mul_scalar(matmul(q, k, /*transpose_b=*/true),
                        static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
    if (pos_uses_bias(p.pos)) logits = add(logits, gathered_bias(p));
  } else {
    logits = add(Tensor<T>::zeros({nw, heads, n, n}), gathered_bias(p));
  }
  if (additive_mask.defined()) {
    logits = add(logits, reshape(additive_mask, {nw, 1, n, n}));
  }

  auto probs = softmax(logits, 3);
  auto ctx = matmul(probs, v);                            // [nw, H, n, d]
  ctx = reshape(permute(ctx, {0, 2, 1, 3}), {nw, n, p.dim});
  return linear(ctx, p.proj_w, p.proj_b);
}

template <typename T>
Tensor<T> window_attention(const Tensor<T>& tokens, const WindowAttentionParams<T>& p,
                           const ShiftMask* mask) {
  return window_attention(tokens, p, mask ? mask_tensor<T>(*mask) : Tensor<T>());
}

// ---------------------------------------------------------------------------
// Strategy 1: cyclic shift. Rolls the map so the displaced partition becomes
// a regular one, attends the regular window count with a sub-window mask,
// rolls back, crops padding.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> shifted_window_attention_cyclic(const Tensor<T>& x, const WindowAttentionParams<T>& p,
                                          const WindowConfig& cfg) {
  if (cfg.M != p.M) {
    throw ShapeError("cyclic attention: config window " + std::to_string(cfg.M) +
                     " != parameter window " + std::to_string(p.M));
  }
  auto path = apply_cyclic_path(x, cfg);
  auto attended = window_attention(path.windows, p, path.mask);
  return undo_cyclic_path(attended, cfg);
}

// ---------------------------------------------------------------------------
// Strategy 2: naive padding. Materializes every window of the displaced grid
// (one more per axis than the regular grid when shifted), padding ragged
// edge windows to M^2 slots with masked zero rows. Costs more windows than
// the cyclic path; kept as its oracle and benchmark contrast.
// ---------------------------------------------------------------------------

// Window anchors of the displaced grid along one padded axis.
inline std::vector<int64_t> displaced_anchors(int64_t padded_extent, int64_t M, int64_t shift) {
  std::vector<int64_t> a;
  for (int64_t v = (shift > 0) ? shift - M : 0; v < padded_extent; v += M) a.push_back(v);
  return a;
}

template <typename T>
Tensor<T> shifted_window_attention_padded(const Tensor<T>& x, const WindowAttentionParams<T>& p,
                                          const WindowConfig& cfg) {
  cfg.validate();
  if (cfg.M != p.M) {
    throw ShapeError("padded attention: config window " + std::to_string(cfg.M) +
                     " != parameter window " + std::to_string(p.M));
  }
  if (x.dim(0) != cfg.h || x.dim(1) != cfg.w) {
    throw ShapeError("padded attention: input " + shape_str(x.shape()) +
                     " does not match config extents");
  }
  const int64_t h = cfg.h, w = cfg.w, M = cfg.M, c = x.dim(2);
  const auto ys = displaced_anchors(cfg.padded_h(), M, cfg.shift);
  const auto xs = displaced_anchors(cfg.padded_w(), M, cfg.shift);
  const int64_t nw = static_cast<int64_t>(ys.size() * xs.size());
  const int64_t n = M * M;

  std::vector<int64_t> gather_idx(nw * n);
  std::vector<int64_t> scatter_idx(h * w, -1);
  std::vector<T> mask_vals(nw * n * n);
  std::vector<uint8_t> real(n);
  int64_t win = 0;
  for (int64_t ay : ys) {
    for (int64_t ax : xs) {
      for (int64_t slot = 0; slot < n; ++slot) {
        const int64_t gy = ay + slot / M, gx = ax + slot % M;
        const bool in_map = gy >= 0 && gy < h && gx >= 0 && gx < w;
        real[slot] = in_map ? 1 : 0;
        gather_idx[win * n + slot] = in_map ? gy * w + gx : -1;
        if (in_map) scatter_idx[gy * w + gx] = win * n + slot;
      }
      T* m = mask_vals.data() + win * n * n;
      for (int64_t a = 0; a < n; ++a)
        for (int64_t b = 0; b < n; ++b)
          m[a * n + b] = (real[a] && real[b]) ? T{0} : mask_neg<T>();
      ++win;
    }
  }

  auto windows = reshape(index_select_rows(reshape(x, {h * w, c}), std::move(gather_idx)),
                         {nw, n, c});
  auto mask = Tensor<T>::from_data({nw, n, n}, std::move(mask_vals));
  auto attended = window_attention(windows, p, mask);
  auto rows = index_select_rows(reshape(attended, {nw * n, c}), std::move(scatter_idx));
  return reshape(rows, {h, w, c});
}

// ---------------------------------------------------------------------------
// Strategy 3: loop-based reference. No batching, no rolling, no graph —
// walks each window of the displaced partition, runs dense multi-head
// attention on exactly the tokens it contains, writes results in place.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> brute_force_shifted_attention(const Tensor<T>& x, const WindowAttentionParams<T>& p,
                                        const WindowConfig& cfg) {
  cfg.validate();
  const int64_t h = cfg.h, w = cfg.w, M = cfg.M, C = x.dim(2);
  if (C != p.dim || M != p.M) {
    throw ShapeError("reference attention: parameter shapes do not match input/config");
  }
  const int64_t heads = p.num_heads, d = p.head_dim, side = 2 * M - 1;
  const T* W = p.qkv_w.data().data();
  const T* B = p.qkv_b.data().data();
  const T* Pw = p.proj_w.data().data();
  const T* Pb = p.proj_b.data().data();
  const T* bias = p.bias_table.data().data();
  const T* xv = x.data().data();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  auto segment = [&](int64_t v) {
    return cfg.shift == 0 ? v / M : (v < cfg.shift ? 0 : 1 + (v - cfg.shift) / M);
  };
  const int64_t nseg_y = segment(h - 1) + 1;
  const int64_t nseg_x = segment(w - 1) + 1;

  std::vector<T> out(h * w * C, T{0});
  std::vector<int64_t> rows, cols;
  std::vector<T> q, k, v, ctx, logits, probs;
  for (int64_t sy = 0; sy < nseg_y; ++sy) {
    rows.clear();
    for (int64_t y = 0; y < h; ++y)
      if (segment(y) == sy) rows.push_back(y);
    for (int64_t sx = 0; sx < nseg_x; ++sx) {
      cols.clear();
      for (int64_t cx = 0; cx < w; ++cx)
        if (segment(cx) == sx) cols.push_back(cx);

      const int64_t n = static_cast<int64_t>(rows.size() * cols.size());
      q.assign(n * C, T{0});
      k.assign(n * C, T{0});
      v.assign(n * C, T{0});
      for (int64_t t = 0; t < n; ++t) {
        const int64_t y = rows[t / cols.size()], cx = cols[t % cols.size()];
        const T* row = xv + (y * w + cx) * C;
        for (int64_t j = 0; j < C; ++j) {
          T aq = B[j], ak = B[C + j], av = B[2 * C + j];
          for (int64_t cc = 0; cc < C; ++cc) {
            aq += W[j * C + cc] * row[cc];
            ak += W[(C + j) * C + cc] * row[cc];
            av += W[(2 * C + j) * C + cc] * row[cc];
          }
          q[t * C + j] = aq;
          k[t * C + j] = ak;
          v[t * C + j] = av;
        }
      }

      ctx.assign(n * C, T{0});
      logits.resize(n);
      probs.resize(n);
      for (int64_t hd = 0; hd < heads; ++hd) {
        for (int64_t a = 0; a < n; ++a) {
          const int64_t ya = rows[a / cols.size()], xa = cols[a % cols.size()];
          for (int64_t b = 0; b < n; ++b) {
            T l{0};
            if (pos_uses_dot(p.pos)) {
              T dot{0};
              for (int64_t dd = 0; dd < d; ++dd)
                dot += q[a * C + hd * d + dd] * k[b * C + hd * d + dd];
              l = dot * scale;
            }
            if (pos_uses_bias(p.pos)) {
              const int64_t yb = rows[b / cols.size()], xb = cols[b % cols.size()];
              const int64_t bucket = (ya - yb + M - 1) * side + (xa - xb + M - 1);
              l += bias[hd * side * side + bucket];
            }
            logits[b] = l;
          }
          T mx = logits[0];
          for (int64_t b = 1; b < n; ++b) mx = std::max(mx, logits[b]);
          T denom{0};
          for (int64_t b = 0; b < n; ++b) {
            probs[b] = std::exp(logits[b] - mx);
            denom += probs[b];
          }
          const T inv = T{1} / denom;
          for (int64_t b = 0; b < n; ++b) {
            const T pw = probs[b] * inv;
            for (int64_t dd = 0; dd < d; ++dd)
              ctx[a * C + hd * d + dd] += pw * v[b * C + hd * d + dd];
          }
        }
      }

      for (int64_t t = 0; t < n; ++t) {
        const int64_t y = rows[t / cols.size()], cx = cols[t % cols.size()];
        T* orow = out.data() + (y * w + cx) * C;
        for (int64_t j = 0; j < C; ++j) {
          T acc = Pb[j];
          for (int64_t cc = 0; cc < C; ++cc) acc += Pw[j * C + cc] * ctx[t * C + cc];
          orow[j] = acc;
        }
      }
    }
  }
  return Tensor<T>::from_data({h, w, C}, std::move(out));
}

// ---------------------------------------------------------------------------
// Sliding-window baseline: every pixel attends its own M x M neighborhood
// (clipped at borders), recomputing the neighborhood's projections per query
// — the unbatchable formulation whose cost motivates fixed windows. Reports
// its multiply-accumulates to the active meter. Forward-only.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sliding_window_attention(const Tensor<T>& x, const WindowAttentionParams<T>& p) {
  if (p.M % 2 == 0) {
    throw ShapeError("sliding attention: window size must be odd for a centered neighborhood, got " +
                     std::to_string(p.M));
  }
  const int64_t h = x.dim(0), w = x.dim(1), C = x.dim(2);
  if (C != p.dim) {
    throw ShapeError("sliding attention: input channels " + std::to_string(C) +
                     " do not match dim " + std::to_string(p.dim));
  }
  const int64_t heads = p.num_heads, d = p.head_dim, M = p.M, r = M / 2, side = 2 * M - 1;
  const T* W = p.qkv_w.data().data();
  const T* B = p.qkv_b.data().data();
  const T* Pw = p.proj_w.data().data();
  const T* Pb = p.proj_b.data().data();
  const T* bias = p.bias_table.data().data();
  const T* xv = x.data().data();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  std::vector<T> out(h * w * C);
  std::vector<T> q(C), kv;  // per-query neighborhood buffers
  std::vector<T> ctx(C), logits, probs;
  uint64_t macs = 0;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t cx = 0; cx < w; ++cx) {
      const int64_t y0 = std::max<int64_t>(0, y - r), y1 = std::min<int64_t>(h - 1, y + r);
      const int64_t x0 = std::max<int64_t>(0, cx - r), x1 = std::min<int64_t>(w - 1, cx + r);
      const int64_t n = (y1 - y0 + 1) * (x1 - x0 + 1);

      // Fresh projections for this query and its neighborhood.
      const T* qrow = xv + (y * w + cx) * C;
      for (int64_t j = 0; j < C; ++j) {
        T acc = B[j];
        for (int64_t cc = 0; cc < C; ++cc) acc += W[j * C + cc] * qrow[cc];
        q[j] = acc;
      }
      kv.assign(n * 2 * C, T{0});
      int64_t t = 0;
      for (int64_t ny = y0; ny <= y1; ++ny)
        for (int64_t nx = x0; nx <= x1; ++nx, ++t) {
          const T* row = xv + (ny * w + nx) * C;
          T* krow = kv.data() + t * 2 * C;
          for (int64_t j = 0; j < C; ++j) {
            T ak = B[C + j], av = B[2 * C + j];
            for (int64_t cc = 0; cc < C; ++cc) {
              ak += W[(C + j) * C + cc] * row[cc];
              av += W[(2 * C + j) * C + cc] * row[cc];
            }
            krow[j] = ak;
            krow[C + j] = av;
          }
        }
      macs += static_cast<uint64_t>(C) * C + 2u * n * C * C;  // q, then k/v per neighbor

      std::fill(ctx.begin(), ctx.end(), T{0});
      logits.resize(n);
      probs.resize(n);
      for (int64_t hd = 0; hd < heads; ++hd) {
        t = 0;
        for (int64_t ny = y0; ny <= y1; ++ny)
          for (int64_t nx = x0; nx <= x1; ++nx, ++t) {
            T dot{0};
            const T* krow = kv.data() + t * 2 * C;
            if (pos_uses_dot(p.pos)) {
              for (int64_t dd = 0; dd < d; ++dd) dot += q[hd * d + dd] * krow[hd * d + dd];
              dot *= scale;
            }
            if (pos_uses_bias(p.pos)) {
              dot += bias[hd * side * side + (y - ny + M - 1) * side + (cx - nx + M - 1)];
            }
            logits[t] = dot;
          }
        T mx = logits[0];
        for (int64_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
        T denom{0};
        for (int64_t i = 0; i < n; ++i) {
          probs[i] = std::exp(logits[i] - mx);
          denom += probs[i];
        }
        const T inv = T{1} / denom;
        for (int64_t i = 0; i < n; ++i) {
          const T pw = probs[i] * inv;
          const T* vrow = kv.data() + i * 2 * C + C;
          for (int64_t dd = 0; dd < d; ++dd) ctx[hd * d + dd] += pw * vrow[hd * d + dd];
        }
      }
      macs += 2u * static_cast<uint64_t>(n) * C;  // logits + weighted sum, all heads

      T* orow = out.data() + (y * w + cx) * C;
      for (int64_t j = 0; j < C; ++j) {
        T acc = Pb[j];
        for (int64_t cc = 0; cc < C; ++cc) acc += Pw[j * C + cc] * ctx[cc];
        orow[j] = acc;
      }
      macs += static_cast<uint64_t>(C) * C;
    }
  }
  record_macs(macs);
  return Tensor<T>::from_data({h, w, C}, std::move(out));
}

// ---------------------------------------------------------------------------
// Bias-table resampling for transferring a table between window sizes.
// Catmull-Rom bicubic (a = -0.5), edge-clamped, corners aligned; the
// same-size case returns the input bits untouched.
// ---------------------------------------------------------------------------

namespace detail {
inline double catmull_rom(double p0, double p1, double p2, double p3, double t) {
  return 0.5 * (2.0 * p1 + t * (-p0 + p2) + t * t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) +
                t * t * t * (-p0 + 3.0 * p1 - 3.0 * p2 + p3));
}

// Resamples length `src` to length `dst` along the last axis of a [rows, src]
// buffer, in double precision.
inline std::vector<double> resample_rows(const std::vector<double>& in, int64_t rows, int64_t src,
                                         int64_t dst) {
  std::vector<double> out(rows * dst);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < dst; ++j) {
      const double u = (dst == 1) ? (src - 1) / 2.0
                                  : static_cast<double>(j) * (src - 1) / (dst - 1);
      const int64_t i1 = std::min<int64_t>(src - 1, static_cast<int64_t>(std::floor(u)));
      const double t = u - static_cast<double>(i1);
      auto sample = [&](int64_t i) { return in[r * src + std::clamp<int64_t>(i, 0, src - 1)]; };
      out[r * dst + j] = catmull_rom(sample(i1 - 1), sample(i1), sample(i1 + 1), sample(i1 + 2), t);
    }
  }
  return out;
}
}  // namespace detail

template <typename T>
Tensor<T> interpolate_bias_table(const Tensor<T>& table, int64_t m_from, int64_t m_to) {
  if (m_from < 1 || m_to < 1) {
    throw ShapeError("interpolate_bias_table: window sizes must be >= 1");
  }
  const int64_t s1 = 2 * m_from - 1, s2 = 2 * m_to - 1;
  if (table.rank() != 2 || table.dim(1) != s1 * s1) {
    throw ShapeError("interpolate_bias_table: table " + shape_str(table.shape()) +
                     " does not match source window " + std::to_string(m_from));
  }
  if (m_to == m_from) {
    return Tensor<T>::from_data(table.shape(), table.data());  // bit-exact
  }
  const int64_t heads = table.dim(0);
  std::vector<T> out(heads * s2 * s2);
  for (int64_t hd = 0; hd < heads; ++hd) {
    std::vector<double> grid(s1 * s1);
    for (int64_t i = 0; i < s1 * s1; ++i)
      grid[i] = static_cast<double>(table.data()[hd * s1 * s1 + i]);
    // Separable pass: columns across each row, then rows across each column.
    auto wide = detail::resample_rows(grid, s1, s1, s2);            // [s1, s2]
    std::vector<double> wide_t(s2 * s1);
    for (int64_t i = 0; i < s1; ++i)
      for (int64_t j = 0; j < s2; ++j) wide_t[j * s1 + i] = wide[i * s2 + j];
    auto full_t = detail::resample_rows(wide_t, s2, s1, s2);        // [s2, s2] transposed
    for (int64_t i = 0; i < s2; ++i)
      for (int64_t j = 0; j < s2; ++j)
        out[hd * s2 * s2 + i * s2 + j] = static_cast<T>(full_t[j * s2 + i]);
  }
  return Tensor<T>::from_data({heads, s2 * s2}, std::move(out));
}

}  // namespace swin
