#include "glyphgan/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace glyphgan {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }

int num_threads() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(num_threads());
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t used = std::min(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(used);
  for (std::size_t w = 0; w < used; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += used) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace glyphgan
