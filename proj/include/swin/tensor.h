#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <utility>

#include "swin/common.h"

namespace swin {

// ---------------------------------------------------------------------------
// Gradient mode (thread-local). Ops record backward closures only while
// enabled; NoGradGuard turns recording off for a scope.
// ---------------------------------------------------------------------------

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---------------------------------------------------------------------------
// MAC meter. Matrix-product ops report batch*m*n*k multiply-accumulates to
// the thread's active meter; elementwise work is not counted, matching the
// usual convention for model complexity figures. Scopes label the bucket
// that subsequent MACs land in.
// ---------------------------------------------------------------------------

class FlopsMeter {
 public:
  void add(uint64_t macs) {
    total_ += macs;
    if (!scopes_.empty()) buckets_[scopes_.back()] += macs;
  }
  uint64_t total_macs() const { return total_; }
  const std::map<std::string, uint64_t>& buckets() const { return buckets_; }
  void reset() {
    total_ = 0;
    buckets_.clear();
  }

 private:
  friend class MeterScope;
  uint64_t total_ = 0;
  std::map<std::string, uint64_t> buckets_;
  std::vector<std::string> scopes_;
};

namespace detail {
inline FlopsMeter*& active_meter() {
  thread_local FlopsMeter* m = nullptr;
  return m;
}
}  // namespace detail

inline void record_macs(uint64_t macs) {
  if (FlopsMeter* m = detail::active_meter()) m->add(macs);
}

// Installs a meter for the current thread for the guard's lifetime.
class MeterGuard {
 public:
  explicit MeterGuard(FlopsMeter& m) : prev_(detail::active_meter()) {
    detail::active_meter() = &m;
  }
  ~MeterGuard() { detail::active_meter() = prev_; }
  MeterGuard(const MeterGuard&) = delete;
  MeterGuard& operator=(const MeterGuard&) = delete;

 private:
  FlopsMeter* prev_;
};

// Pushes a bucket label while alive. No-op when no meter is installed.
class MeterScope {
 public:
  explicit MeterScope(std::string label) : meter_(detail::active_meter()) {
    if (meter_) meter_->scopes_.push_back(std::move(label));
  }
  ~MeterScope() {
    if (meter_) meter_->scopes_.pop_back();
  }
  MeterScope(const MeterScope&) = delete;
  MeterScope& operator=(const MeterScope&) = delete;

 private:
  FlopsMeter* meter_;
};

// ---------------------------------------------------------------------------
// Autodiff graph node. A node owns its forward value; `backprop` scatters
// the node's grad into its parents' grads. Parents are held by shared_ptr,
// so a live output keeps the whole graph reachable for backward().
// ---------------------------------------------------------------------------

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily; empty means "no grad yet"
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backprop;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T{0});
  }
};

// ---------------------------------------------------------------------------
// Tensor: a shared handle to a TensorNode. Row-major, dense, owning.
// ---------------------------------------------------------------------------

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape) { return filled(std::move(shape), T{0}); }

  static Tensor filled(Shape shape, T v) {
    auto n = std::make_shared<TensorNode<T>>();
    n->value.assign(shape_numel(shape), v);
    n->shape = std::move(shape);
    return Tensor(std::move(n));
  }

  static Tensor from_data(Shape shape, std::vector<T> data) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
      throw ShapeError("from_data: " + std::to_string(data.size()) +
                       " values do not fill shape " + shape_str(shape));
    }
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericError("from_data: non-finite input value");
      }
    }
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return Tensor(std::move(n));
  }

  // Normal(0, stddev^2) entries from the given engine.
  static Tensor randn(Shape shape, std::mt19937_64& rng, T stddev = T{1}) {
    std::normal_distribution<double> dist(0.0, 1.0);
    auto n = std::make_shared<TensorNode<T>>();
    n->value.resize(shape_numel(shape));
    n->shape = std::move(shape);
    for (auto& v : n->value) v = static_cast<T>(dist(rng)) * stddev;
    return Tensor(std::move(n));
  }

  // Normal(0, stddev^2) truncated to +/-2 stddev by resampling.
  static Tensor trunc_normal(Shape shape, std::mt19937_64& rng, T stddev) {
    std::normal_distribution<double> dist(0.0, 1.0);
    auto n = std::make_shared<TensorNode<T>>();
    n->value.resize(shape_numel(shape));
    n->shape = std::move(shape);
    for (auto& v : n->value) {
      double z = dist(rng);
      while (std::abs(z) > 2.0) z = dist(rng);
      v = static_cast<T>(z) * stddev;
    }
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node()->shape; }
  int rank() const { return static_cast<int>(node()->shape.size()); }
  int64_t dim(int i) const {
    const Shape& s = node()->shape;
    if (i < 0) i += static_cast<int>(s.size());
    if (i < 0 || i >= static_cast<int>(s.size())) {
      throw ShapeError("dim: axis " + std::to_string(i) + " out of range for " + shape_str(s));
    }
    return s[i];
  }
  int64_t numel() const { return node()->numel(); }

  const std::vector<T>& data() const { return node()->value; }
  // Direct mutable access (parameter updates, loaders). Bypasses the graph.
  std::vector<T>& mutable_data() { return node()->value; }

  T item() const {
    if (numel() != 1) {
      throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
    }
    return node()->value[0];
  }

  T at(std::initializer_list<int64_t> idx) const {
    const Shape& s = shape();
    if (idx.size() != s.size()) {
      throw ShapeError("at: expected " + std::to_string(s.size()) + " indices for " +
                       shape_str(s));
    }
    int64_t off = 0;
    int axis = 0;
    for (int64_t i : idx) {
      if (i < 0 || i >= s[axis]) {
        throw ShapeError("at: index " + std::to_string(i) + " out of range on axis " +
                         std::to_string(axis) + " of " + shape_str(s));
      }
      off = off * s[axis] + i;
      ++axis;
    }
    return node()->value[off];
  }

  bool requires_grad() const { return node()->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node()->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !node()->grad.empty(); }
  const std::vector<T>& grad() const {
    if (node()->grad.empty()) {
      throw NumericError("grad: no gradient has been accumulated for this tensor");
    }
    return node()->grad;
  }
  void zero_grad() { node()->grad.clear(); }

  const std::shared_ptr<TensorNode<T>>& node() const {
    if (!node_) throw ShapeError("tensor is empty (default-constructed)");
    return node_;
  }

  // Same values, detached from the recorded graph.
  Tensor detach() const {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = shape();
    n->value = data();
    return Tensor(std::move(n));
  }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// A named, trainable tensor.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
};

// ---------------------------------------------------------------------------
// Backward pass: topological sort from `loss`, then run closures in reverse.
// ---------------------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  }
  auto root = loss.node();
  if (!root->requires_grad) {
    throw NumericError("backward: loss does not depend on any tracked tensor");
  }

  // Iterative post-order DFS (graphs can be deep for long training loops).
  std::vector<TensorNode<T>*> order;
  std::map<TensorNode<T>*, int> state;  // 0 = unseen, 1 = in stack, 2 = done
  std::vector<std::pair<TensorNode<T>*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  state[root.get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode<T>* p = node->parents[next++].get();
      if (p->requires_grad && state[p] == 0) {
        state[p] = 1;
        stack.emplace_back(p, 0);
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

}  // namespace swin
