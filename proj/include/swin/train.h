#pragma once

// Desk-scale training: a seeded synthetic two-class task whose discriminative
// feature straddles a stage-1 window boundary, plus a deterministic AdamW
// training loop with per-step logging.

#include <algorithm>
#include <numeric>

#include "swin/checkpoint.h"
#include "swin/model.h"

namespace swin {

// ---------------------------------------------------------------------------
// Synthetic tasks. Images are Gaussian noise plus a stripe built from two
// halves that meet at the vertical mid-line — which at 32 px with 4-px
// patches and M = 4 is the stage-1 window boundary (pixel 15|16, token
// column 3|4). Either half on its own is class-uninformative; the label is
// carried only by the relationship between the halves, a feature that spans
// the window boundary.
//
//   jog:   a bright horizontal stripe. In class 0 it continues straight
//          across the mid-line; in class 1 the right half is displaced
//          vertically by `jog` token rows (cyclically; the row position is
//          uniform with wraparound).
//   sign:  a vertical stripe around the mid-line whose two halves carry a
//          random sign each; class 0 = signs agree, class 1 = signs flip at
//          the boundary.
//   match: `stripes_per_side` one-token-row half-stripes per side at
//          distinct random rows. In class 0 exactly one left stripe
//          continues into a right stripe at the same row; in class 1 no
//          left and right stripes share a row. Deciding the class means
//          testing row-set intersection across the boundary amid clutter.
// ---------------------------------------------------------------------------

enum class StripeKind { jog, sign, match };

struct ToyTaskConfig {
  int64_t img = 32;
  int64_t count = 256;
  StripeKind kind = StripeKind::jog;
  double amplitude = 3.0;      // stripe strength
  double noise = 0.5;          // background std
  int64_t thickness = 2;       // jog: stripe thickness in token rows
  int64_t jog = 4;             // jog: class-1 vertical offset of the right half, token rows
  int64_t half_width = 8;      // sign: pixels per half on each side of the mid-line
  int64_t stripes_per_side = 3;  // match: half-stripes on each side
};

template <typename T>
struct ToySample {
  Tensor<T> image;  // [img, img, 3]
  int64_t label = 0;
};

template <typename T>
std::vector<ToySample<T>> make_boundary_dataset(const ToyTaskConfig& tc, uint64_t seed) {
  constexpr int64_t patch = 4;
  const int64_t rows = tc.img / patch;  // token rows
  const int64_t mid = tc.img / 2;       // stage-1 window boundary in pixels
  if (tc.img % patch != 0 || tc.thickness < 1 || tc.thickness > rows ||
      tc.jog % rows == 0 || tc.half_width < 1 || tc.half_width > mid ||
      tc.stripes_per_side < 1 || 2 * tc.stripes_per_side > rows) {
    throw ShapeError("make_boundary_dataset: inconsistent stripe geometry");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int64_t> pick_row(0, rows - 1);
  std::vector<ToySample<T>> out;
  out.reserve(static_cast<size_t>(tc.count));
  for (int64_t i = 0; i < tc.count; ++i) {
    const int64_t label = i % 2;
    std::vector<T> img(tc.img * tc.img * 3);
    for (auto& v : img) v = static_cast<T>(tc.noise * gauss(rng));
    auto paint_half = [&](int64_t x0, int64_t x1, int64_t top_row, int64_t thickness) {
      for (int64_t t = 0; t < thickness; ++t) {
        const int64_t tr = (top_row + t) % rows;
        for (int64_t y = tr * patch; y < (tr + 1) * patch; ++y) {
          for (int64_t x = x0; x < x1; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
              img[(y * tc.img + x) * 3 + c] += static_cast<T>(tc.amplitude);
            }
          }
        }
      }
    };
    if (tc.kind == StripeKind::jog) {
      const int64_t left_row = pick_row(rng);
      const int64_t right_row = (label == 0) ? left_row : (left_row + tc.jog) % rows;
      paint_half(0, mid, left_row, tc.thickness);
      paint_half(mid, tc.img, right_row, tc.thickness);
    } else if (tc.kind == StripeKind::match) {
      // Distinct rows per side; class 0 shares exactly one row, class 1 none.
      std::vector<int64_t> all(rows);
      std::iota(all.begin(), all.end(), int64_t{0});
      std::shuffle(all.begin(), all.end(), rng);
      const int64_t k = tc.stripes_per_side;
      std::vector<int64_t> left(all.begin(), all.begin() + k);
      std::vector<int64_t> right(all.begin() + k, all.begin() + 2 * k);
      if (label == 0) {
        std::uniform_int_distribution<int64_t> pick_k(0, k - 1);
        const int64_t from = pick_k(rng);
        const int64_t to = pick_k(rng);
        right[to] = left[from];
      }
      for (int64_t r : left) paint_half(0, mid, r, 1);
      for (int64_t r : right) paint_half(mid, tc.img, r, 1);
    } else {
      const double s_left = (rng() & 1) ? 1.0 : -1.0;
      const double s_right = (label == 0) ? s_left : -s_left;
      for (int64_t y = 0; y < tc.img; ++y) {
        for (int64_t x = mid - tc.half_width; x < mid + tc.half_width; ++x) {
          const double s = (x < mid) ? s_left : s_right;
          img[(y * tc.img + x) * 3 + 0] += static_cast<T>(tc.amplitude * s);
          img[(y * tc.img + x) * 3 + 1] += static_cast<T>(tc.amplitude);
          img[(y * tc.img + x) * 3 + 2] += static_cast<T>(tc.amplitude * s);
        }
      }
    }
    out.push_back({Tensor<T>::from_data({tc.img, tc.img, 3}, std::move(img)), label});
  }
  return out;
}

// The tiny configuration the task is trained with. The ablation pair uses a
// larger image so the vertical mid-line stays a window boundary through
// stage 2: without shift, information can only cross it at stage 3.
inline ModelConfig toy_model_config(bool shifted_pair = false, bool no_shift = false,
                                    int64_t img = 32) {
  ModelConfig c;
  c.variant = "toy";
  c.img_h = c.img_w = img;
  c.embed_dim = 16;
  c.depths = shifted_pair ? std::vector<int64_t>{2, 1, 1, 1} : std::vector<int64_t>{1, 1, 1, 1};
  c.heads = {2, 4, 8, 16};
  c.window = 4;
  c.num_classes = 2;
  c.disable_shift = no_shift;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainSettings {
  int64_t steps = 400;
  int64_t batch_size = 16;
  double lr = 2e-3;
  int64_t warmup_steps = 40;  // linear ramp 0 -> lr, then cosine decay to 0
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  uint64_t seed = 7;  // batch sampling
};

// Linear warmup followed by cosine decay over the remaining steps.
inline double scheduled_lr(const TrainSettings& ts, int64_t step) {
  if (ts.warmup_steps > 0 && step < ts.warmup_steps) {
    return ts.lr * static_cast<double>(step + 1) / static_cast<double>(ts.warmup_steps);
  }
  const double span = static_cast<double>(std::max<int64_t>(1, ts.steps - ts.warmup_steps));
  const double progress = static_cast<double>(step - ts.warmup_steps) / span;
  constexpr double pi = 3.14159265358979323846;
  return ts.lr * 0.5 * (1.0 + std::cos(pi * std::clamp(progress, 0.0, 1.0)));
}

struct StepLog {
  int64_t step = 0;
  double loss = 0.0;
  double batch_accuracy = 0.0;
};

struct TrainLog {
  std::vector<StepLog> steps;
  double final_train_accuracy = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["final_train_accuracy"] = final_train_accuracy;
    auto& s = j["steps"] = nlohmann::ordered_json::array();
    for (const auto& st : steps) {
      s.push_back({{"step", st.step}, {"loss", st.loss}, {"accuracy", st.batch_accuracy}});
    }
    return j;
  }
};

template <typename T>
double evaluate_accuracy(const SwinModel<T>& model, const std::vector<ToySample<T>>& data) {
  NoGradGuard ng;
  int64_t correct = 0;
  for (const auto& sample : data) {
    auto logits = model.forward(sample.image);
    const auto& v = logits.data();
    int64_t best = 0;
    for (int64_t c = 1; c < logits.dim(1); ++c)
      if (v[c] > v[best]) best = c;
    correct += (best == sample.label) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template <typename T>
TrainLog train_toy(SwinModel<T>& model, const std::vector<ToySample<T>>& data,
                   const TrainSettings& ts) {
  if (data.empty()) throw ShapeError("train_toy: empty dataset");
  if (ts.batch_size < 1 || ts.steps < 1) {
    throw ShapeError("train_toy: steps and batch size must be positive");
  }
  model.set_trainable(true);
  auto params = model.parameters();
  AdamW<T> opt({ts.lr, ts.beta1, ts.beta2, ts.eps, ts.weight_decay});
  std::mt19937_64 rng(ts.seed);
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);

  TrainLog log;
  log.steps.reserve(static_cast<size_t>(ts.steps));
  for (int64_t step = 0; step < ts.steps; ++step) {
    try {
      opt.set_lr(scheduled_lr(ts, step));
      zero_grads(params);
      Tensor<T> loss;
      int64_t correct = 0;
      for (int64_t b = 0; b < ts.batch_size; ++b) {
        const auto& sample = data[pick(rng)];
        auto logits = model.forward(sample.image);
        const auto& v = logits.data();
        int64_t best = 0;
        for (int64_t c = 1; c < logits.dim(1); ++c)
          if (v[c] > v[best]) best = c;
        correct += (best == sample.label) ? 1 : 0;
        auto ce = cross_entropy(logits, {sample.label});
        loss = loss.defined() ? add(loss, ce) : ce;
      }
      loss = mul_scalar(loss, static_cast<T>(1.0 / static_cast<double>(ts.batch_size)));
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite loss");
      }
      backward(loss);
      opt.step(params);
      log.steps.push_back({step, loss_value,
                           static_cast<double>(correct) / static_cast<double>(ts.batch_size)});
    } catch (const NumericError& e) {
      throw NumericError("train_toy: diverged at step " + std::to_string(step) + ": " + e.what());
    }
  }
  log.final_train_accuracy = evaluate_accuracy(model, data);
  return log;
}

}  // namespace swin
