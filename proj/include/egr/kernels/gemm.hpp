#pragma once

#include <cstddef>

namespace egr::kernels {

enum class Trans { no, yes };

// C = alpha * op(A) * op(B) + beta * C, all row-major.
// op(A) is m x k, op(B) is k x n. With Trans::yes the stored matrix is the
// transpose (A stored k x m with leading dimension lda, and so on).
//
// Blocked and packed; the tile loop is OpenMP-parallel. Each output tile is
// owned by exactly one thread and the k dimension is reduced in a fixed
// order, so results are bit-identical for any thread count. When beta == 0,
// C is overwritten without being read.
template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

// Worker-thread cap honoring EGRNET_THREADS. Applied once by set_thread_limit_from_env().
int thread_limit();
void set_thread_limit_from_env();

namespace reference {

// Triple loop, no blocking, no threads. Ground truth for the tests and the
// baseline for the benchmark.
template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace reference
}  // namespace egr::kernels
