#include "gmmscape/common.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace gmmscape {

namespace {
std::atomic<int> g_num_threads{0};  // 0 = unset, use hardware concurrency
}

void set_num_threads(int n) { g_num_threads.store(std::max(0, n)); }

int num_threads() {
  const int n = g_num_threads.load();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace detail {

void parallel_for_blocks(std::int64_t num_blocks,
                         const std::function<void(std::int64_t)>& fn) {
  if (num_blocks <= 0) return;
  const int workers =
      static_cast<int>(std::min<std::int64_t>(num_threads(), num_blocks));
  if (workers <= 1) {
    for (std::int64_t b = 0; b < num_blocks; ++b) fn(b);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::int64_t b = next.fetch_add(1);
        if (b >= num_blocks) break;
        fn(b);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail
}  // namespace gmmscape
