#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace swin {

// Shape/contract violations (bad dimensions, invalid arguments).
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numeric failures surfaced to the caller (NaN/Inf, divergence).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Additive mask value for disallowed attention pairs. Finite rather than
// -inf so fully-masked rows (padded tokens) stay NaN-free through softmax.
template <typename T>
constexpr T mask_neg();
template <>
constexpr float mask_neg<float>() { return -1e4f; }
template <>
constexpr double mask_neg<double>() { return -1e9; }

template <typename T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() { return "f32"; }
template <>
inline const char* dtype_name<double>() { return "f64"; }

// Global thread budget. 1 (the default) keeps every op on the calling
// thread; 0 resolves to the hardware concurrency.
void set_num_threads(int n);
int num_threads();

// Splits [0, n) into contiguous chunks, one worker per chunk. Each output
// element is written by exactly one worker, so results do not depend on the
// thread count.
template <typename F>
void parallel_for(int64_t n, const F& body) {
  int workers = num_threads();
  if (workers <= 1 || n < 4096) {
    body(int64_t{0}, n);
    return;
  }
  if (static_cast<int64_t>(workers) > n) workers = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const int64_t chunk = (n + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    const int64_t lo = w * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  body(int64_t{0}, std::min<int64_t>(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace swin
