#pragma once

// Self-contained correctness sweep for the verify entry point: strategy
// equivalence against brute force, mask-table enumeration against the
// coordinate-membership rule, relative-position bucket arithmetic, and
// analytic-vs-numeric gradients through a block pair. Returns a failure
// list instead of throwing so a driver can report every problem at once.

#include <string>
#include <vector>

#include <json.hpp>

#include "swin/gradcheck.h"
#include "swin/model.h"

namespace swin {

struct VerifyFailure {
  std::string check;
  std::string detail;
};

struct VerifyReport {
  int64_t checks_run = 0;
  std::vector<VerifyFailure> failures;

  bool ok() const { return failures.empty(); }
  nlohmann::ordered_json failures_json() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : failures) arr.push_back({{"check", f.check}, {"detail", f.detail}});
    return arr;
  }
};

namespace detail {

inline std::string geo_str(int64_t h, int64_t w, int64_t M, int64_t shift) {
  return "h=" + std::to_string(h) + " w=" + std::to_string(w) + " M=" + std::to_string(M) +
         " shift=" + std::to_string(shift);
}

// Every (h, w) from 4..17 crossed with window sizes and their half shifts:
// covers divisible, padded, single-window and degenerate-shift geometries.
template <typename Fn>
void for_each_geometry(Fn&& fn) {
  for (int64_t h = 4; h <= 17; ++h)
    for (int64_t w = 4; w <= 17; ++w)
      for (int64_t M : {2, 3, 4, 7})
        for (int64_t shift : {int64_t{0}, M / 2}) fn(h, w, M, shift);
}

}  // namespace detail

// The cyclic-shift path and the padded path must reproduce the brute-force
// per-token reference within `tol` everywhere.
template <typename T>
void verify_equivalence(uint64_t seed, double tol, VerifyReport& report) {
  uint64_t combo = 0;
  detail::for_each_geometry([&](int64_t h, int64_t w, int64_t M, int64_t shift) {
    ++report.checks_run;
    ++combo;
    std::mt19937_64 rng(seed + combo % 23);
    auto x = Tensor<T>::randn({h, w, 8}, rng);
    auto p = WindowAttentionParams<T>::random(8, 2, M, PosMode::rel, rng);
    WindowConfig cfg{h, w, M, shift};
    auto a = shifted_window_attention_cyclic(x, p, cfg);
    auto b = shifted_window_attention_padded(x, p, cfg);
    auto c = brute_force_shifted_attention(x, p, cfg);
    double worst = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i) {
      const double av = a.data()[i], bv = b.data()[i], cv = c.data()[i];
      worst = std::max({worst, std::abs(av - bv), std::abs(av - cv)});
    }
    if (worst > tol) {
      report.failures.push_back({"equivalence", detail::geo_str(h, w, M, shift) + " dtype " +
                                                    dtype_name<T>() + ": max|diff| " +
                                                    std::to_string(worst) + " > " +
                                                    std::to_string(tol)});
    }
  });
}

// The mask table must agree with first principles: a rolled cell belongs to
// the displaced-partition sub-window of its original coordinate (boundaries
// at shift + k*M), pairs attend only within one sub-window, padding never.
inline void verify_masks(VerifyReport& report) {
  detail::for_each_geometry([&](int64_t h, int64_t w, int64_t M, int64_t shift) {
    ++report.checks_run;
    WindowConfig cfg{h, w, M, shift};
    const ShiftMask mask = build_shift_mask(cfg);
    const int64_t ph = cfg.padded_h(), pw = cfg.padded_w();
    const int64_t gw = pw / M, n = M * M;
    auto origin = [&](int64_t rolled, int64_t extent) { return (rolled + shift) % extent; };
    auto band = [&](int64_t orig) { return (orig + M - shift) / M; };
    for (int64_t wy = 0; wy < ph / M; ++wy) {
      for (int64_t wx = 0; wx < gw; ++wx) {
        for (int64_t a = 0; a < n; ++a) {
          for (int64_t b = 0; b < n; ++b) {
            const int64_t ay = origin(wy * M + a / M, ph), ax = origin(wx * M + a % M, pw);
            const int64_t by = origin(wy * M + b / M, ph), bx = origin(wx * M + b % M, pw);
            const bool pad = ay >= h || ax >= w || by >= h || bx >= w;
            const bool expect = !pad && band(ay) == band(by) && band(ax) == band(bx);
            if (mask.allowed(wy * gw + wx, a, b) != expect) {
              report.failures.push_back(
                  {"mask", detail::geo_str(h, w, M, shift) + " window " +
                               std::to_string(wy * gw + wx) + " pair (" + std::to_string(a) +
                               "," + std::to_string(b) + ")"});
              return;
            }
          }
        }
      }
    }
  });
}

// Bucket arithmetic: index(i, j) encodes the 2-D offset between tokens in a
// (2M-1)^2 table; the diagonal is the center and swapping arguments reflects
// through it.
inline void verify_rel_pos(VerifyReport& report) {
  for (int64_t M : {1, 2, 3, 7}) {
    ++report.checks_run;
    const RelPosIndex idx = relative_position_index(M);
    const int64_t n = M * M, span = 2 * M - 1;
    const int64_t center = (M - 1) * span + (M - 1);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        const int64_t dy = i / M - j / M, dx = i % M - j % M;
        const int64_t expect = (dy + M - 1) * span + (dx + M - 1);
        const int64_t got = idx.index[i * n + j];
        if (got != expect || idx.index[i * n + j] + idx.index[j * n + i] != 2 * center) {
          report.failures.push_back({"rel_pos_index",
                                     "M=" + std::to_string(M) + " pair (" + std::to_string(i) +
                                         "," + std::to_string(j) + "): bucket " +
                                         std::to_string(got) + ", expected " +
                                         std::to_string(expect)});
          return;
        }
      }
    }
  }
}

// Gradients through two chained blocks (shifted second block: mask, bias
// gather, LN, GELU, residuals all on the path), f64 only — the probe is not
// meaningful at f32 resolution.
inline void verify_gradients(uint64_t seed, VerifyReport& report) {
  ModelConfig cfg;
  cfg.variant = "grad";
  cfg.img_h = cfg.img_w = 20;
  cfg.embed_dim = 4;
  cfg.depths = {2, 1, 1, 1};
  cfg.heads = {2, 4, 8, 16};
  cfg.window = 3;
  cfg.num_classes = 2;
  cfg.validate();

  for (uint64_t s = seed; s < seed + 10; ++s) {
    ++report.checks_run;
    SwinModel<double> model(cfg, SwinModel<double>::Init::random, s);
    std::mt19937_64 rng(100 + s);
    std::vector<Parameter<double>> extra;
    extra.push_back({"x", Tensor<double>::randn({5, 4, 4}, rng), true});
    std::vector<Parameter<double>*> params{&extra[0]};
    for (auto* p : model.parameters()) {
      if (p->name.rfind("stages.0.", 0) == 0) params.push_back(p);
    }
    // O(1)-scale values keep gradient coordinates above the probe's noise.
    std::normal_distribution<double> dist;
    for (auto* p : params) {
      if (p->name == "x") continue;
      for (auto& v : p->value.mutable_data()) {
        v = p->name.ends_with(".gamma") ? 1.0 + 0.2 * dist(rng) : 0.4 * dist(rng);
      }
    }
    for (auto* p : params) p->value.set_requires_grad(true);
    auto f = [&]() {
      auto y = model.block(model.block(extra[0].value, 0, 0), 0, 1);
      return sum_all(mul(y, y));
    };
    const double worst = finite_diff_check<double>(f, params, 1e-5);
    if (worst > 1e-4) {
      report.failures.push_back({"gradcheck", "seed " + std::to_string(s) +
                                                  ": max relative error " +
                                                  std::to_string(worst)});
    }
  }
}

// Full suite. Equivalence runs in T with a dtype-appropriate tolerance;
// masks, buckets and gradients are dtype-independent.
template <typename T>
VerifyReport run_verification(uint64_t seed) {
  VerifyReport report;
  const double tol = std::is_same_v<T, double> ? 1e-10 : 1e-5;
  verify_equivalence<T>(seed, tol, report);
  verify_masks(report);
  verify_rel_pos(report);
  verify_gradients(seed, report);
  return report;
}

}  // namespace swin
