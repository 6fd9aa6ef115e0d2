/// @file  parallel.hpp
/// @brief Minimal blocking parallel-for over index ranges.

#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mvml {

/// Runs fn(i) for i in [begin, end) on up to `threads` workers and blocks
/// until done. Serial when threads <= 1 or the range is small. The first
/// exception thrown by any worker is rethrown on the caller.
template <typename Fn>
void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end, int threads, Fn&& fn) {
  const std::ptrdiff_t n = end - begin;
  if (n <= 0) return;
  const int workers = std::min<std::ptrdiff_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::ptrdiff_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::mutex err_mutex;
  std::exception_ptr err;
  const std::ptrdiff_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::ptrdiff_t lo = begin + w * chunk;
    const std::ptrdiff_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (std::ptrdiff_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace mvml
