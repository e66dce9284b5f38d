#pragma once

#include <unordered_map>

#include "swin/tensor.h"

namespace swin {

// AdamW with decoupled weight decay: the decay multiplies the parameter
// directly by (1 - lr*wd) each step and never enters the moment estimates.
template <typename T>
class AdamW {
 public:
  struct Settings {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit AdamW(Settings s) : s_(s) {}

  // One update over all trainable parameters. Every trainable parameter must
  // carry a gradient from a preceding backward().
  void step(const std::vector<Parameter<T>*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    for (Parameter<T>* p : params) {
      if (!p->trainable) continue;
      auto node = p->value.node();
      if (node->grad.empty()) {
        throw NumericError("adamw: parameter '" + p->name + "' has no gradient");
      }
      State& st = state_try_emplace(p->name, node->value.size());
      auto& w = node->value;
      const auto& g = node->grad;
      const T decay = static_cast<T>(1.0 - s_.lr * s_.weight_decay);
      for (size_t i = 0; i < w.size(); ++i) {
        w[i] *= decay;
        st.m[i] = static_cast<T>(s_.beta1) * st.m[i] + static_cast<T>(1.0 - s_.beta1) * g[i];
        st.v[i] = static_cast<T>(s_.beta2) * st.v[i] + static_cast<T>(1.0 - s_.beta2) * g[i] * g[i];
        const double mhat = static_cast<double>(st.m[i]) / bc1;
        const double vhat = static_cast<double>(st.v[i]) / bc2;
        w[i] -= static_cast<T>(s_.lr * mhat / (std::sqrt(vhat) + s_.eps));
      }
    }
  }

  int64_t steps_taken() const { return t_; }

  // Scheduler hook: changes the learning rate for subsequent steps.
  void set_lr(double lr) { s_.lr = lr; }
  double lr() const { return s_.lr; }

 private:
  struct State {
    std::vector<T> m, v;
  };

  State& state_try_emplace(const std::string& name, size_t n) {
    auto it = state_.find(name);
    if (it == state_.end()) {
      State st;
      st.m.assign(n, T{0});
      st.v.assign(n, T{0});
      it = state_.emplace(name, std::move(st)).first;
    }
    return it->second;
  }

  Settings s_;
  int64_t t_ = 0;
  std::unordered_map<std::string, State> state_;
};

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (Parameter<T>* p : params) p->value.zero_grad();
}

}  // namespace swin
