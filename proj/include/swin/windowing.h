#pragma once

// Window geometry: partition/reverse, bottom-right padding, the cyclic-shift
// path, shifted-configuration attention masks and relative-position index
// tables. Everything here is pure geometry; attention consumes it.

#include "swin/ops.h"

namespace swin {

struct WindowConfig {
  int64_t h = 0, w = 0;  // feature-map extents in tokens
  int64_t M = 0;         // window side
  int64_t shift = 0;     // 0 (regular) or floor(M/2) (shifted)

  void validate() const {
    if (h < 1 || w < 1) throw ShapeError("WindowConfig: extents must be positive");
    if (M < 1) throw ShapeError("WindowConfig: window size must be >= 1");
    if (shift < 0 || shift >= M) {
      throw ShapeError("WindowConfig: shift " + std::to_string(shift) +
                       " must lie in [0, M) for M=" + std::to_string(M));
    }
  }
  int64_t padded_h() const { return ((h + M - 1) / M) * M; }
  int64_t padded_w() const { return ((w + M - 1) / M) * M; }
  int64_t grid_h() const { return padded_h() / M; }
  int64_t grid_w() const { return padded_w() / M; }
  int64_t num_windows() const { return grid_h() * grid_w(); }
  bool needs_pad() const { return padded_h() != h || padded_w() != w; }
  bool operator<(const WindowConfig& o) const {
    return std::tie(h, w, M, shift) < std::tie(o.h, o.w, o.M, o.shift);
  }
};

// Per-window attend/forbid matrix for one geometry. `allow[win][i][j]` is 1
// where token i of window `win` may attend token j. Convert to the additive
// form (0 / large-negative) with mask_tensor().
struct ShiftMask {
  int64_t grid_h = 0, grid_w = 0, M = 0;
  std::vector<uint8_t> allow;  // [grid_h*grid_w][M*M][M*M]

  int64_t num_windows() const { return grid_h * grid_w; }
  bool allowed(int64_t win, int64_t i, int64_t j) const {
    return allow[(win * M * M + i) * M * M + j] != 0;
  }
  bool all_allowed() const {
    for (uint8_t v : allow)
      if (!v) return false;
    return true;
  }
};

// index[i][j] is the bucket of token i's 2-D offset from token j in a
// flattened (2M-1)x(2M-1) table.
struct RelPosIndex {
  int64_t M = 0;
  std::vector<int64_t> index;  // [M*M][M*M], values in [0, (2M-1)^2)
};

struct WindowCounts {
  int64_t regular = 0;  // ceil(h/M) * ceil(w/M): the cyclic path's batch size
  int64_t shifted = 0;  // (ceil(h/M)+1) * (ceil(w/M)+1): the naive padded grid
};

WindowCounts window_counts(int64_t h, int64_t w, int64_t M);

// Region-id image on the padded extents, in the rolled frame the cyclic path
// attends in: real cells carry 3*rowBand + colBand in [0, 9); padding cells
// carry 9. Two real tokens may attend iff their ids match; padding cells
// never attend anything (not even themselves — their rows are fully masked
// and their outputs are cropped away).
std::vector<int> shift_region_ids(const WindowConfig& cfg);

ShiftMask build_shift_mask(const WindowConfig& cfg);
RelPosIndex relative_position_index(int64_t M);

// Cached variants: read-mostly, built once per key under a single writer.
// References stay valid for the process lifetime.
const ShiftMask& cached_shift_mask(const WindowConfig& cfg);
const RelPosIndex& cached_rel_pos_index(int64_t M);

// Additive form of a mask: 0 where allowed, the dtype's large negative
// constant where forbidden. Shape [numWindows, M^2, M^2].
template <typename T>
Tensor<T> mask_tensor(const ShiftMask& m) {
  const int64_t mm = m.M * m.M;
  std::vector<T> vals(m.num_windows() * mm * mm);
  for (size_t i = 0; i < vals.size(); ++i) vals[i] = m.allow[i] ? T{0} : mask_neg<T>();
  return Tensor<T>::from_data({m.num_windows(), mm, mm}, std::move(vals));
}

// ---------------------------------------------------------------------------
// Partition / reverse (differentiable layout ops)
// ---------------------------------------------------------------------------

// [h, w, C] -> [numWindows, M^2, C]; windows row-major over the window grid,
// tokens row-major within each window.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int64_t M) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("window_partition: expected [h, w, C], got " + shape_str(s));
  if (s[0] % M != 0 || s[1] % M != 0) {
    throw ShapeError("window_partition: extents " + shape_str(s) + " not multiples of M=" +
                     std::to_string(M) + " (caller must pad)");
  }
  const int64_t gh = s[0] / M, gw = s[1] / M, c = s[2];
  auto t = reshape(x, {gh, M, gw, M, c});
  t = permute(t, {0, 2, 1, 3, 4});
  return reshape(t, {gh * gw, M * M, c});
}

// Inverse of window_partition.
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, int64_t M, int64_t h, int64_t w) {
  const Shape& s = windows.shape();
  if (s.size() != 3 || s[1] != M * M) {
    throw ShapeError("window_reverse: expected [numWindows, M^2, C], got " + shape_str(s));
  }
  if (h % M != 0 || w % M != 0 || s[0] != (h / M) * (w / M)) {
    throw ShapeError("window_reverse: " + std::to_string(s[0]) + " windows do not tile " +
                     std::to_string(h) + "x" + std::to_string(w) + " with M=" + std::to_string(M));
  }
  const int64_t gh = h / M, gw = w / M, c = s[2];
  auto t = reshape(windows, {gh, gw, M, M, c});
  t = permute(t, {0, 2, 1, 3, 4});
  return reshape(t, {h, w, c});
}

// Zero-pads [h, w, C] at the bottom/right to the next multiples of M.
template <typename T>
Tensor<T> pad_bottom_right(const Tensor<T>& x, int64_t M) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("pad_bottom_right: expected [h, w, C], got " + shape_str(s));
  WindowConfig cfg{s[0], s[1], M, 0};
  if (!cfg.needs_pad()) return x;
  return pad_hw(x, cfg.padded_h(), cfg.padded_w());
}

// ---------------------------------------------------------------------------
// Cyclic-shift path
// ---------------------------------------------------------------------------

template <typename T>
struct CyclicWindows {
  Tensor<T> windows;            // [numWindows, M^2, C]
  const ShiftMask* mask;        // nullptr when no shift and no padding
};

// Pad to window multiples, roll by (-shift, -shift), partition. The window
// count equals the regular count; the mask isolates sub-windows.
template <typename T>
CyclicWindows<T> apply_cyclic_path(const Tensor<T>& x, const WindowConfig& cfg) {
  cfg.validate();
  if (x.dim(0) != cfg.h || x.dim(1) != cfg.w) {
    throw ShapeError("apply_cyclic_path: input " + shape_str(x.shape()) +
                     " does not match config extents " + std::to_string(cfg.h) + "x" +
                     std::to_string(cfg.w));
  }
  Tensor<T> t = pad_bottom_right(x, cfg.M);
  if (cfg.shift > 0) t = roll2d(t, -cfg.shift, -cfg.shift);
  CyclicWindows<T> out;
  out.windows = window_partition(t, cfg.M);
  out.mask = (cfg.shift > 0 || cfg.needs_pad()) ? &cached_shift_mask(cfg) : nullptr;
  return out;
}

// Reverse windows, roll back by (+shift, +shift), crop padding.
template <typename T>
Tensor<T> undo_cyclic_path(const Tensor<T>& windows, const WindowConfig& cfg) {
  cfg.validate();
  Tensor<T> t = window_reverse(windows, cfg.M, cfg.padded_h(), cfg.padded_w());
  if (cfg.shift > 0) t = roll2d(t, cfg.shift, cfg.shift);
  if (cfg.needs_pad()) t = crop_hw(t, cfg.h, cfg.w);
  return t;
}

}  // namespace swin
