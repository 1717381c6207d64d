#include "egr/kernels/gram.hpp"

#include <vector>

#include "egr/kernels/gemm.hpp"

namespace egr::kernels {

template <typename T>
void plane_gram_forward(std::size_t count, std::size_t rows, std::size_t cols, const T* planes, T* grams) {
  const std::size_t in_plane = rows * cols;
  const std::size_t out_plane = cols * cols;
  // A single large plane is better served by the parallel GEMM than by the
  // plane loop.
  if (count == 1) {
    gemm(Trans::yes, Trans::no, cols, cols, rows, T(1), planes, cols, planes, cols, T(0), grams, cols);
  } else {
#pragma omp parallel for schedule(static) num_threads(thread_limit())
    for (std::size_t p = 0; p < count; ++p) {
      const T* x = planes + p * in_plane;
      T* g = grams + p * out_plane;
      gemm(Trans::yes, Trans::no, cols, cols, rows, T(1), x, cols, x, cols, T(0), g, cols);
    }
  }
  for (std::size_t p = 0; p < count; ++p) {
    T* g = grams + p * out_plane;
    for (std::size_t i = 0; i < cols; ++i) {
      for (std::size_t j = i + 1; j < cols; ++j) g[j * cols + i] = g[i * cols + j];
    }
  }
}

template <typename T>
void plane_gram_backward(std::size_t count, std::size_t rows, std::size_t cols, const T* planes,
                         const T* grad_grams, T* grad_planes) {
  const std::size_t in_plane = rows * cols;
  const std::size_t out_plane = cols * cols;
#pragma omp parallel for schedule(static) num_threads(thread_limit())
  for (std::size_t p = 0; p < count; ++p) {
    const T* x = planes + p * in_plane;
    const T* u = grad_grams + p * out_plane;
    std::vector<T> sym(out_plane);
    for (std::size_t i = 0; i < cols; ++i) {
      for (std::size_t j = 0; j < cols; ++j) sym[i * cols + j] = u[i * cols + j] + u[j * cols + i];
    }
    gemm(Trans::no, Trans::no, rows, cols, cols, T(1), x, cols, sym.data(), cols, T(0), grad_planes + p * in_plane,
         cols);
  }
}

namespace reference {

template <typename T>
void plane_gram_forward(std::size_t count, std::size_t rows, std::size_t cols, const T* planes, T* grams) {
  for (std::size_t p = 0; p < count; ++p) {
    const T* x = planes + p * rows * cols;
    T* g = grams + p * cols * cols;
    for (std::size_t i = 0; i < cols; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        T sum = 0;
        for (std::size_t r = 0; r < rows; ++r) sum += x[r * cols + i] * x[r * cols + j];
        g[i * cols + j] = sum;
      }
    }
  }
}

template <typename T>
void plane_gram_backward(std::size_t count, std::size_t rows, std::size_t cols, const T* planes,
                         const T* grad_grams, T* grad_planes) {
  // dG[i][j]/dP[r][c] = [c == i] P[r][j] + [c == j] P[r][i]
  for (std::size_t p = 0; p < count; ++p) {
    const T* x = planes + p * rows * cols;
    const T* u = grad_grams + p * cols * cols;
    T* dx = grad_planes + p * rows * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        T sum = 0;
        for (std::size_t j = 0; j < cols; ++j) sum += u[c * cols + j] * x[r * cols + j];
        for (std::size_t i = 0; i < cols; ++i) sum += u[i * cols + c] * x[r * cols + i];
        dx[r * cols + c] = sum;
      }
    }
  }
}

template void plane_gram_forward<float>(std::size_t, std::size_t, std::size_t, const float*, float*);
template void plane_gram_forward<double>(std::size_t, std::size_t, std::size_t, const double*, double*);
template void plane_gram_backward<float>(std::size_t, std::size_t, std::size_t, const float*, const float*,
                                         float*);
template void plane_gram_backward<double>(std::size_t, std::size_t, std::size_t, const double*, const double*,
                                          double*);

}  // namespace reference

template void plane_gram_forward<float>(std::size_t, std::size_t, std::size_t, const float*, float*);
template void plane_gram_forward<double>(std::size_t, std::size_t, std::size_t, const double*, double*);
template void plane_gram_backward<float>(std::size_t, std::size_t, std::size_t, const float*, const float*,
                                         float*);
template void plane_gram_backward<double>(std::size_t, std::size_t, std::size_t, const double*, const double*,
                                          double*);

}  // namespace egr::kernels
