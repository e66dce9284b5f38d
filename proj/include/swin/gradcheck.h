#pragma once

#include <functional>
#include <limits>

#include "swin/ops.h"

namespace swin {

// Compares analytic gradients of the scalar function `f` against central
// finite differences over every coordinate of `params`, returning the worst
// relative error max(|a - n|) / max(|a|, |n|, floor).
//
// The floor marks where the probe stops being a measurement: central
// differences evaluate (f(w+h) - f(w-h)) / 2h, so rounding noise of a few
// ulps of |f| in each evaluation shows up as a spurious gradient of order
// eps*|f|/2h. A coordinate whose true derivative is exactly zero (for
// example a key-projection bias, which cancels inside softmax) reads back
// that noise, and judging it against a fixed tiny denominator reports a
// failure that no step size can avoid. The floor therefore scales with the
// noise: 1e6 * eps * |f| / 2h, covering ~100 ulps of accumulation error and
// a caller tolerance down to 1e-4, never below the legacy 1e-6.
//
// `f` must be deterministic: it is evaluated twice up front and the two
// values must agree bit-for-bit, otherwise the comparison would be
// meaningless and a NumericError is raised.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>()>& f,
                         const std::vector<Parameter<T>*>& params, double step) {
  if (step <= 0) throw ShapeError("finite_diff_check: step must be positive");

  auto eval = [&]() -> T {
    NoGradGuard ng;
    Tensor<T> out = f();
    if (out.numel() != 1) {
      throw ShapeError("finite_diff_check: f must return a scalar, got " +
                       shape_str(out.shape()));
    }
    return out.item();
  };
  const T probe_a = eval();
  const T probe_b = eval();
  if (std::memcmp(&probe_a, &probe_b, sizeof(T)) != 0) {
    throw NumericError("finite_diff_check: f is not deterministic across repeated calls");
  }

  // Analytic pass.
  for (Parameter<T>* p : params) {
    p->value.zero_grad();
    p->value.set_requires_grad(true);
  }
  Tensor<T> loss = f();
  backward(loss);
  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (Parameter<T>* p : params) {
    auto node = p->value.node();
    analytic.push_back(node->grad.empty() ? std::vector<T>(node->value.size(), T{0})
                                          : node->grad);
  }

  const T h = static_cast<T>(step);
  const double noise = static_cast<double>(std::numeric_limits<T>::epsilon()) *
                       std::max(1.0, std::abs(static_cast<double>(probe_a))) / (2.0 * step);
  const double floor = std::max(1e-6, 1e6 * noise);
  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& w = params[pi]->value.mutable_data();
    for (size_t i = 0; i < w.size(); ++i) {
      const T orig = w[i];
      w[i] = orig + h;
      const double up = static_cast<double>(eval());
      w[i] = orig - h;
      const double down = static_cast<double>(eval());
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * static_cast<double>(h));
      const double a = static_cast<double>(analytic[pi][i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace swin
