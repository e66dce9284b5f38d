#include "swin/windowing.h"

#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>

namespace swin {

WindowCounts window_counts(int64_t h, int64_t w, int64_t M) {
  if (h < 1 || w < 1 || M < 1) throw ShapeError("window_counts: extents and M must be positive");
  const int64_t gh = (h + M - 1) / M;
  const int64_t gw = (w + M - 1) / M;
  return WindowCounts{gh * gw, (gh + 1) * (gw + 1)};
}

namespace {

constexpr int kPadRegion = 9;

// Band index of a rolled-frame coordinate. The three bands [0, E-M),
// [E-M, E-shift), [E-shift, E) separate tokens that stayed contiguous from
// those the roll wrapped around; within any single window each band holds
// exactly one sub-window of the unshifted map.
int band(int64_t v, int64_t extent, int64_t M, int64_t shift) {
  if (v < extent - M) return 0;
  if (v < extent - shift) return 1;
  return 2;
}

}  // namespace

std::vector<int> shift_region_ids(const WindowConfig& cfg) {
  cfg.validate();
  const int64_t ph = cfg.padded_h(), pw = cfg.padded_w();
  std::vector<int> ids(ph * pw);
  for (int64_t i = 0; i < ph; ++i) {
    for (int64_t j = 0; j < pw; ++j) {
      // A rolled-frame cell (i, j) holds the padded-map cell shifted down-right.
      const int64_t oy = (i + cfg.shift) % ph;
      const int64_t ox = (j + cfg.shift) % pw;
      if (oy >= cfg.h || ox >= cfg.w) {
        ids[i * pw + j] = kPadRegion;
      } else {
        ids[i * pw + j] =
            3 * band(i, ph, cfg.M, cfg.shift) + band(j, pw, cfg.M, cfg.shift);
      }
    }
  }
  return ids;
}

ShiftMask build_shift_mask(const WindowConfig& cfg) {
  cfg.validate();
  const std::vector<int> ids = shift_region_ids(cfg);
  const int64_t M = cfg.M, pw = cfg.padded_w();
  ShiftMask mask;
  mask.grid_h = cfg.grid_h();
  mask.grid_w = cfg.grid_w();
  mask.M = M;
  mask.allow.assign(mask.num_windows() * M * M * M * M, 0);
  size_t out = 0;
  for (int64_t wr = 0; wr < mask.grid_h; ++wr) {
    for (int64_t wc = 0; wc < mask.grid_w; ++wc) {
      for (int64_t a = 0; a < M * M; ++a) {
        const int ida = ids[(wr * M + a / M) * pw + (wc * M + a % M)];
        for (int64_t b = 0; b < M * M; ++b) {
          const int idb = ids[(wr * M + b / M) * pw + (wc * M + b % M)];
          // Padding rows are fully masked, their own diagonal included;
          // softmax stays finite there thanks to the finite mask constant.
          mask.allow[out++] = (ida == idb && ida != kPadRegion) ? 1 : 0;
        }
      }
    }
  }
  return mask;
}

RelPosIndex relative_position_index(int64_t M) {
  if (M < 1) throw ShapeError("relative_position_index: M must be >= 1");
  RelPosIndex r;
  r.M = M;
  const int64_t n = M * M, side = 2 * M - 1;
  r.index.resize(n * n);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t iy = i / M, ix = i % M;
    for (int64_t j = 0; j < n; ++j) {
      const int64_t dy = iy - j / M, dx = ix - j % M;
      r.index[i * n + j] = (dy + M - 1) * side + (dx + M - 1);
    }
  }
  return r;
}

namespace {
std::shared_mutex g_mask_mu;
std::map<WindowConfig, std::unique_ptr<ShiftMask>> g_mask_cache;

std::shared_mutex g_index_mu;
std::map<int64_t, std::unique_ptr<RelPosIndex>> g_index_cache;
}  // namespace

const ShiftMask& cached_shift_mask(const WindowConfig& cfg) {
  cfg.validate();
  {
    std::shared_lock lock(g_mask_mu);
    auto it = g_mask_cache.find(cfg);
    if (it != g_mask_cache.end()) return *it->second;
  }
  std::unique_lock lock(g_mask_mu);
  auto& slot = g_mask_cache[cfg];
  if (!slot) slot = std::make_unique<ShiftMask>(build_shift_mask(cfg));
  return *slot;
}

const RelPosIndex& cached_rel_pos_index(int64_t M) {
  {
    std::shared_lock lock(g_index_mu);
    auto it = g_index_cache.find(M);
    if (it != g_index_cache.end()) return *it->second;
  }
  std::unique_lock lock(g_index_mu);
  auto& slot = g_index_cache[M];
  if (!slot) slot = std::make_unique<RelPosIndex>(relative_position_index(M));
  return *slot;
}

}  // namespace swin
