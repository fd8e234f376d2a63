#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pb {

// Execution mode for data-parallel kernels. Every parallel kernel has a
// serial route through the same per-item code, so `serial` doubles as the
// reference implementation in tests and benchmarks.
enum class Exec { serial, parallel };

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

template <class F>
inline void parallel_for(std::int64_t n, Exec exec, F&& body) {
  if (exec == Exec::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t i = 0; i < n; ++i) body(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) body(i);
  }
}

}  // namespace pb
