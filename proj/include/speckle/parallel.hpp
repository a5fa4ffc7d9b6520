#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace speckle {

/// Resolve a thread request (0 = library default) to a concrete count.
inline int effective_threads(int requested) {
#ifdef _OPENMP
  return requested > 0 ? requested : omp_get_max_threads();
#else
  (void)requested;
  return 1;
#endif
}

inline void set_thread_count(int requested) {
#ifdef _OPENMP
  if (requested > 0) omp_set_num_threads(requested);
#else
  (void)requested;
#endif
}

}  // namespace speckle
