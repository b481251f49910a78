#include "edgelab/parallel.hpp"

namespace edgelab {

namespace {
std::atomic<unsigned> g_max_threads{0};
}

unsigned max_threads() noexcept {
  const unsigned n = g_max_threads.load();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void set_max_threads(unsigned n) noexcept { g_max_threads.store(n); }

}  // namespace edgelab
