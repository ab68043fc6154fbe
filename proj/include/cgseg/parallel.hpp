#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace cgseg {

/// Worker count for intra-op parallelism. Reads CGSEG_THREADS once; defaults to 1.
inline std::size_t thread_count() {
  static const std::size_t count = [] {
    const char* env = std::getenv("CGSEG_THREADS");
    if (!env) return std::size_t{1};
    try {
      const long v = std::stol(env);
      return v > 0 ? static_cast<std::size_t>(v) : std::size_t{1};
    } catch (...) {
      return std::size_t{1};
    }
  }();
  return count;
}

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so results are identical for any thread count as long as bodies write
/// disjoint memory.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace cgseg
