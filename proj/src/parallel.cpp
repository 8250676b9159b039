#include "fedquit/parallel.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedquit::exec {

namespace {
std::atomic<int> g_threads{0};  // 0 = OpenMP default
}

void set_threads(int threads) {
  g_threads.store(threads < 0 ? 0 : threads);
#ifdef _OPENMP
  if (threads > 1) omp_set_num_threads(threads);
#endif
}

int threads() { return g_threads.load(); }

bool parallel_enabled() {
#ifdef _OPENMP
  return g_threads.load() != 1;
#else
  return false;
#endif
}

}  // namespace fedquit::exec
