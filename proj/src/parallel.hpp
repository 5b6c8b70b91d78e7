#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dbvar::detail {

// DBVAR_THREADS overrides the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("DBVAR_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Calls fn(worker, begin, end) for consecutive chunks of [0, count). Chunks
// are claimed dynamically, so fn must only touch per-worker or per-index state.
template <class F>
void parallel_chunks(std::int64_t count, std::int64_t chunk, F&& fn) {
  if (count <= 0) return;
  const std::int64_t chunks = (count + chunk - 1) / chunk;
  const int workers = static_cast<int>(std::min<std::int64_t>(worker_count(), chunks));
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&](int worker) {
    try {
      for (std::int64_t c = next++; c < chunks; c = next++) {
        std::int64_t begin = c * chunk;
        fn(worker, begin, std::min(count, begin + chunk));
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = chunks;
    }
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace dbvar::detail
