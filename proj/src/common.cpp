#include "swin/common.h"

#include <atomic>

namespace swin {

namespace {
std::atomic<int> g_num_threads{1};
}

void set_num_threads(int n) {
  if (n < 0) throw ShapeError("set_num_threads: count must be >= 0");
  if (n == 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
  }
  g_num_threads.store(n, std::memory_order_relaxed);
}

int num_threads() { return g_num_threads.load(std::memory_order_relaxed); }

}  // namespace swin
