#include "core/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mmp::core::kernels {

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

bool in_parallel_region() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

namespace {

// Computes rows [i0, i1) of c. a's storage is m x k (k x m when ta),
// b's is k x n (n x k when tb). Inner reductions run in index order.
template <typename T>
void row_range(const T* a, const T* b, T* c, int i0, int i1, int m, int n, int k, bool ta, bool tb, bool acc) {
  for (int i = i0; i < i1; ++i) {
    T* ci = c + static_cast<int64_t>(i) * n;
    if (!acc)
      for (int j = 0; j < n; ++j) ci[j] = T(0);
    if (!ta && !tb) {
      const T* ai = a + static_cast<int64_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const T aip = ai[p];
        const T* bp = b + static_cast<int64_t>(p) * n;
        for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    } else if (!ta && tb) {
      const T* ai = a + static_cast<int64_t>(i) * k;
      for (int j = 0; j < n; ++j) {
        const T* bj = b + static_cast<int64_t>(j) * k;
        T s = T(0);
        for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
        ci[j] += s;
      }
    } else if (ta && !tb) {
      for (int p = 0; p < k; ++p) {
        const T api = a[static_cast<int64_t>(p) * m + i];
        const T* bp = b + static_cast<int64_t>(p) * n;
        for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
      }
    } else {
      for (int j = 0; j < n; ++j) {
        T s = T(0);
        for (int p = 0; p < k; ++p) s += a[static_cast<int64_t>(p) * m + i] * b[static_cast<int64_t>(j) * k + p];
        ci[j] += s;
      }
    }
  }
}

}  // namespace

template <typename T>
void matmul_serial(const T* a, const T* b, T* c, int m, int n, int k, bool ta, bool tb, bool acc) {
  row_range(a, b, c, 0, m, m, n, k, ta, tb, acc);
}

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int n, int k, bool ta, bool tb, bool acc) {
#ifdef _OPENMP
  // Small products are memory-bound here; threads only pay off once the
  // per-row work amortizes the fork/join cost.
  const int64_t work = static_cast<int64_t>(m) * n * k;
  if (work >= (int64_t{1} << 21) && !omp_in_parallel()) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) row_range(a, b, c, i, i + 1, m, n, k, ta, tb, acc);
    return;
  }
#endif
  matmul_serial(a, b, c, m, n, k, ta, tb, acc);
}

template void matmul_serial<float>(const float*, const float*, float*, int, int, int, bool, bool, bool);
template void matmul_serial<double>(const double*, const double*, double*, int, int, int, bool, bool, bool);
template void matmul<float>(const float*, const float*, float*, int, int, int, bool, bool, bool);
template void matmul<double>(const double*, const double*, double*, int, int, int, bool, bool, bool);

}  // namespace mmp::core::kernels
