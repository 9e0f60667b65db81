#pragma once

#include <cstdint>

namespace mmp::core::kernels {

// Number of worker threads the parallel kernels and batch loops may use.
void set_threads(int n);
int max_threads();
bool in_parallel_region();

// c (m x n) = op(a) * op(b) + (acc ? c : 0), row-major.
// op(a) is a transposed when ta is set; a is then stored k x m.
// The parallel path splits rows of c across threads; every c element is
// written by exactly one thread and each inner reduction runs in a fixed
// serial order, so results are bitwise identical to matmul_serial.
template <typename T>
void matmul_serial(const T* a, const T* b, T* c, int m, int n, int k, bool ta, bool tb, bool acc);

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int n, int k, bool ta, bool tb, bool acc);

}  // namespace mmp::core::kernels
