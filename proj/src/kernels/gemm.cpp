#include "egr/kernels/gemm.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#ifdef __AVX512F__
#include <immintrin.h>
#endif

namespace egr::kernels {
namespace {

// Register tile: kMr rows by three 512-bit vectors of columns (24 accumulators).
constexpr std::size_t kMr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kNc = 2048;
// Row tiles per cache block: a kMcTiles * kMr by kKc slice of packed A stays in L2
// while every B sliver streams past it.
constexpr std::size_t kMcTiles = 8;
// With this few rows of A each B element is reused too little to repay packing;
// full-width slivers of an untransposed B are then read in place.
constexpr std::size_t kStreamRows = 64;

template <typename T>
constexpr std::size_t kNr = 192 / sizeof(T);

template <typename T>
inline T load(const T* p, std::size_t ld, Trans t, std::size_t row, std::size_t col) {
  return t == Trans::no ? p[row * ld + col] : p[col * ld + row];
}

// kMr rows starting at row0, columns [p0, p0 + kc) of op(A); rows past m are zero.
template <typename T>
void pack_a(const T* a, std::size_t lda, Trans t, std::size_t m, std::size_t row0, std::size_t p0, std::size_t kc,
            T* dst) {
  const std::size_t rows = std::min(kMr, m - row0);
  if (rows < kMr) std::fill(dst, dst + kMr * kc, T(0));
  if (t == Trans::no) {
    for (std::size_t i = 0; i < rows; ++i) {
      const T* src = a + (row0 + i) * lda + p0;
      for (std::size_t p = 0; p < kc; ++p) dst[p * kMr + i] = src[p];
    }
  } else {
    for (std::size_t p = 0; p < kc; ++p) {
      const T* src = a + (p0 + p) * lda + row0;
      for (std::size_t i = 0; i < rows; ++i) dst[p * kMr + i] = src[i];
    }
  }
}

// `cols` (<= nr) columns starting at col0, rows [p0, p0 + kc) of op(B), padded to nr.
template <typename T>
void pack_b(const T* b, std::size_t ldb, Trans t, std::size_t col0, std::size_t cols, std::size_t p0,
            std::size_t kc, T* dst) {
  constexpr std::size_t nr = kNr<T>;
  if (cols < nr) std::fill(dst, dst + nr * kc, T(0));
  if (t == Trans::no) {
    for (std::size_t p = 0; p < kc; ++p) {
      const T* src = b + (p0 + p) * ldb + col0;
      std::copy(src, src + cols, dst + p * nr);
    }
  } else {
    for (std::size_t j = 0; j < cols; ++j) {
      const T* src = b + (col0 + j) * ldb + p0;
      for (std::size_t p = 0; p < kc; ++p) dst[p * nr + j] = src[p];
    }
  }
}

// acc = sum_k a[k][0..kMr) outer b[k][0..kNr); c += alpha * acc.
template <typename T>
inline void micro_kernel(std::size_t kc, const T* __restrict pa, const T* __restrict pb, std::size_t ldb, T alpha,
                         T* __restrict c, std::size_t ldc) {
  constexpr std::size_t nr = kNr<T>;
  T acc[kMr][nr] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const T* bp = pb + p * ldb;
#pragma GCC unroll 8
    for (std::size_t i = 0; i < kMr; ++i) {
      const T ai = pa[p * kMr + i];
#pragma omp simd
      for (std::size_t j = 0; j < nr; ++j) acc[i][j] += ai * bp[j];
    }
  }
  for (std::size_t i = 0; i < kMr; ++i) {
#pragma omp simd
    for (std::size_t j = 0; j < nr; ++j) c[i * ldc + j] += alpha * acc[i][j];
  }
}

#ifdef __AVX512F__
template <>
inline void micro_kernel<float>(std::size_t kc, const float* __restrict pa, const float* __restrict pb, std::size_t ldb, float alpha,
                                float* __restrict c, std::size_t ldc) {
  constexpr std::size_t nv = kNr<float> / 16;
  __m512 acc[kMr][nv];
  for (std::size_t i = 0; i < kMr; ++i) {
    for (std::size_t v = 0; v < nv; ++v) acc[i][v] = _mm512_setzero_ps();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    __m512 bv[nv];
    for (std::size_t v = 0; v < nv; ++v) bv[v] = _mm512_loadu_ps(pb + p * ldb + 16 * v);
#pragma GCC unroll 16
    for (std::size_t i = 0; i < kMr; ++i) {
      const __m512 ai = _mm512_set1_ps(pa[p * kMr + i]);
      for (std::size_t v = 0; v < nv; ++v) acc[i][v] = _mm512_fmadd_ps(ai, bv[v], acc[i][v]);
    }
  }
  const __m512 va = _mm512_set1_ps(alpha);
  for (std::size_t i = 0; i < kMr; ++i) {
    float* row = c + i * ldc;
    for (std::size_t v = 0; v < nv; ++v) {
      _mm512_storeu_ps(row + 16 * v, _mm512_fmadd_ps(va, acc[i][v], _mm512_loadu_ps(row + 16 * v)));
    }
  }
}

template <>
inline void micro_kernel<double>(std::size_t kc, const double* __restrict pa, const double* __restrict pb, std::size_t ldb,
                                 double alpha, double* __restrict c, std::size_t ldc) {
  constexpr std::size_t nv = kNr<double> / 8;
  __m512d acc[kMr][nv];
  for (std::size_t i = 0; i < kMr; ++i) {
    for (std::size_t v = 0; v < nv; ++v) acc[i][v] = _mm512_setzero_pd();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    __m512d bv[nv];
    for (std::size_t v = 0; v < nv; ++v) bv[v] = _mm512_loadu_pd(pb + p * ldb + 8 * v);
#pragma GCC unroll 16
    for (std::size_t i = 0; i < kMr; ++i) {
      const __m512d ai = _mm512_set1_pd(pa[p * kMr + i]);
      for (std::size_t v = 0; v < nv; ++v) acc[i][v] = _mm512_fmadd_pd(ai, bv[v], acc[i][v]);
    }
  }
  const __m512d va = _mm512_set1_pd(alpha);
  for (std::size_t i = 0; i < kMr; ++i) {
    double* row = c + i * ldc;
    for (std::size_t v = 0; v < nv; ++v) {
      _mm512_storeu_pd(row + 8 * v, _mm512_fmadd_pd(va, acc[i][v], _mm512_loadu_pd(row + 8 * v)));
    }
  }
}
#endif

}  // namespace

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T(0)) {
      std::fill(row, row + n, T(0));
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
  if (k == 0 || alpha == T(0)) return;

  constexpr std::size_t nr = kNr<T>;
  const std::size_t m_tiles = (m + kMr - 1) / kMr;
  const bool stream_b = trans_b == Trans::no && m <= kStreamRows;
  // Reused across calls: many small products (one per feature plane) would
  // otherwise spend more time allocating and clearing buffers than multiplying.
  // Packing overwrites every element it later reads.
  thread_local std::vector<T> packed_a;
  thread_local std::vector<T> packed_b;
  const std::size_t a_need = m_tiles * kMr * kKc;
  const std::size_t b_need = ((std::min(n, kNc) + nr - 1) / nr) * nr * kKc;
  if (packed_a.size() < a_need) packed_a.resize(a_need);
  if (packed_b.size() < b_need) packed_b.resize(b_need);
  // Worker threads below must see this thread's buffers, not their own.
  T* const a_buf = packed_a.data();
  T* const b_buf = packed_b.data();

  for (std::size_t j0 = 0; j0 < n; j0 += kNc) {
    const std::size_t nc = std::min(kNc, n - j0);
    const std::size_t n_tiles = (nc + nr - 1) / nr;
    for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
      const std::size_t kc = std::min(kKc, k - p0);

      // Pack A as kMr-row slivers and B as nr-column slivers, zero-padded.
#pragma omp parallel for schedule(static) num_threads(thread_limit())
      for (std::size_t t = 0; t < m_tiles; ++t) {
        pack_a(a, lda, trans_a, m, t * kMr, p0, kc, a_buf + t * kMr * kc);
      }
#pragma omp parallel for schedule(static) num_threads(thread_limit())
      for (std::size_t t = 0; t < n_tiles; ++t) {
        const std::size_t col0 = t * nr;
        if (stream_b && col0 + nr <= nc) continue;
        pack_b(b, ldb, trans_b, j0 + col0, std::min(nr, nc - col0), p0, kc, b_buf + t * nr * kc);
      }

      const std::size_t tiles = m_tiles * n_tiles;
#pragma omp parallel for schedule(static) num_threads(thread_limit())
      for (std::size_t tile = 0; tile < tiles; ++tile) {
        // Order: cache block of row tiles, then column sliver, then row tile in the block.
        const std::size_t block = tile / (kMcTiles * n_tiles);
        const std::size_t block_rows = std::min(kMcTiles, m_tiles - block * kMcTiles);
        const std::size_t within = tile - block * kMcTiles * n_tiles;
        const std::size_t ti = block * kMcTiles + within % block_rows;
        const std::size_t tj = within / block_rows;
        const T* pa = a_buf + ti * kMr * kc;
        const std::size_t row0 = ti * kMr;
        const std::size_t col0 = j0 + tj * nr;
        const bool full_cols = col0 + nr <= j0 + nc;
        const bool in_place = stream_b && full_cols;
        const T* pb = in_place ? b + p0 * ldb + col0 : b_buf + tj * nr * kc;
        const std::size_t pb_stride = in_place ? ldb : nr;
        if (row0 + kMr <= m && full_cols) {
          micro_kernel(kc, pa, pb, pb_stride, alpha, c + row0 * ldc + col0, ldc);
        } else {
          T edge[kMr * nr] = {};
          micro_kernel(kc, pa, pb, pb_stride, alpha, edge, nr);
          const std::size_t rows = std::min(kMr, m - row0);
          const std::size_t cols = std::min(nr, j0 + nc - col0);
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) c[(row0 + i) * ldc + col0 + j] += edge[i * nr + j];
          }
        }
      }
    }
  }
}

namespace {
int g_thread_limit = 0;
}

int thread_limit() {
#ifdef _OPENMP
  if (g_thread_limit > 0) return g_thread_limit;
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_thread_limit_from_env() {
  if (const char* env = std::getenv("EGRNET_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) g_thread_limit = v;
    } catch (const std::exception&) {
      // ignored: a malformed value leaves the OpenMP default in place
    }
  }
}

namespace reference {

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = 0;
      for (std::size_t p = 0; p < k; ++p) {
        sum += load(a, lda, trans_a, i, p) * load(b, ldb, trans_b, p, j);
      }
      T& out = c[i * ldc + j];
      out = alpha * sum + (beta == T(0) ? T(0) : beta * out);
    }
  }
}

template void gemm<float>(Trans, Trans, std::size_t, std::size_t, std::size_t, float, const float*,
                          std::size_t, const float*, std::size_t, float, float*, std::size_t);
template void gemm<double>(Trans, Trans, std::size_t, std::size_t, std::size_t, double, const double*,
                           std::size_t, const double*, std::size_t, double, double*, std::size_t);

}  // namespace reference

template void gemm<float>(Trans, Trans, std::size_t, std::size_t, std::size_t, float, const float*,
                          std::size_t, const float*, std::size_t, float, float*, std::size_t);
template void gemm<double>(Trans, Trans, std::size_t, std::size_t, std::size_t, double, const double*,
                           std::size_t, const double*, std::size_t, double, double*, std::size_t);

}  // namespace egr::kernels
