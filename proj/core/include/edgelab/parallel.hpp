#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace edgelab {

/// Upper bound on worker threads used by parallel_for. Defaults to the
/// hardware concurrency; 1 makes every loop sequential.
unsigned max_threads() noexcept;
void set_max_threads(unsigned n) noexcept;

/// Calls f(i) for i in [0, n). Iterations must be independent and write only
/// to per-index outputs, so results do not depend on scheduling. The
/// exception thrown by the lowest failing index is rethrown.
template <typename F>
void parallel_for(std::ptrdiff_t n, F&& f) {
  if (n <= 0) return;
  const unsigned workers =
      static_cast<unsigned>(std::min<std::ptrdiff_t>(max_threads(), n));
  if (workers <= 1) {
    for (std::ptrdiff_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::ptrdiff_t> next{0};
  std::mutex mu;
  std::ptrdiff_t failed_at = n;
  std::exception_ptr failure;
  auto work = [&] {
    for (;;) {
      const std::ptrdiff_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace edgelab
