#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace forge {

/// Runs fn(i) for i in [begin, end) on up to `threads` workers pulling
/// fixed-size blocks. Each index is processed exactly once; results must only
/// depend on the index, so output is identical for any thread count.
template <typename Fn>
void parallel_for(long begin, long end, int threads, Fn&& fn, long block = 1) {
  if (end <= begin) return;
  threads = std::max(1, threads);
  if (threads == 1 || end - begin <= block) {
    for (long i = begin; i < end; ++i) fn(i);
    return;
  }
  std::atomic<long> next{begin};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const long lo = next.fetch_add(block);
      if (lo >= end) return;
      const long hi = std::min(end, lo + block);
      try {
        for (long i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(end);
        return;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const long n_workers = std::min<long>(threads, (end - begin + block - 1) / block);
    for (long t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

inline int hardware_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace forge
