#include "smart/parallel.hpp"

#include <cstdlib>
#include <string>

namespace smart {

int thread_count() {
  if (const char* env = std::getenv("SMART_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace smart
