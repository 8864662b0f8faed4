#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace smart {

/// Worker cap: SMART_THREADS if set and positive, otherwise the OpenMP default.
int thread_count();

/// Runs fn(i) for i in [0, n). Iterations must write disjoint outputs; the
/// result is then independent of scheduling. If iterations throw, the
/// exception from the lowest index is rethrown after the loop.
template <class Fn>
void parallel_for(std::ptrdiff_t n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n > 0 ? n : 0));
#ifdef _OPENMP
  const int threads = thread_count();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (n > 1 && threads > 1)
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class Fn>
void serial_for(std::ptrdiff_t n, Fn&& fn) {
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
}

}  // namespace smart
