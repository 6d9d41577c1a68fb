#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace ssrstf {

/// Worker cap: SSRSTF_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
std::size_t thread_count();

/// Splits [0, n) into contiguous chunks and runs `fn(begin, end)` on each.
/// Each index is handled by exactly one chunk, so results do not depend on
/// the number of workers as long as `fn` writes disjoint outputs.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t min_chunk, Fn&& fn) {
  if (n == 0) return;
  std::size_t workers = std::min(thread_count(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    std::size_t b = w * chunk;
    std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace ssrstf
