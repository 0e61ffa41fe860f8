#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

#include "graphalign/core.hpp"

namespace graphalign {

inline int resolve_workers(int workers) {
  if (workers == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
  }
  require(workers > 0, ErrorKind::config, "workers must be >= 0");
  return workers;
}

/// Runs fn(begin, end) over a static block partition of [0, n). Blocks are
/// contiguous and disjoint, so fn may write to per-index slots without
/// synchronization. The last block runs on the calling thread. The result
/// must not depend on the worker count; keep any accumulation per-index.
template <typename Fn>
void parallel_for(std::int64_t n, int workers, Fn&& fn) {
  workers = resolve_workers(workers);
  if (n <= 0) return;
  const int blocks = int(std::min<std::int64_t>(workers, n));
  if (blocks == 1) {
    fn(std::int64_t(0), n);
    return;
  }

  const std::int64_t chunk = (n + blocks - 1) / blocks;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(blocks));
  pool.reserve(std::size_t(blocks) - 1);
  for (int b = 0; b + 1 < blocks; ++b) {
    const std::int64_t lo = b * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    pool.emplace_back([&fn, &errors, b, lo, hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        errors[std::size_t(b)] = std::current_exception();
      }
    });
  }
  const std::int64_t lo = std::int64_t(blocks - 1) * chunk;
  try {
    fn(lo, n);
  } catch (...) {
    errors[std::size_t(blocks) - 1] = std::current_exception();
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace graphalign
