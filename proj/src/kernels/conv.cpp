#include "egr/kernels/conv.hpp"

#include <algorithm>
#include <vector>

#include "egr/error.hpp"
#include "egr/kernels/gemm.hpp"

namespace egr::kernels {

ConvGeometry ConvGeometry::make(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                                std::size_t stride, Padding padding, std::size_t in_h, std::size_t in_w) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 || in_h == 0 || in_w == 0) {
    throw DimensionError("convolution sizes must be positive");
  }
  ConvGeometry g;
  g.in_channels = in_channels;
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.in_h = in_h;
  g.in_w = in_w;
  if (padding == Padding::same) {
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const auto total = [&](std::size_t out, std::size_t in) {
      const std::size_t span = (out - 1) * stride + kernel;
      return span > in ? span - in : std::size_t{0};
    };
    g.pad_top = total(g.out_h, in_h) / 2;
    g.pad_left = total(g.out_w, in_w) / 2;
  } else {
    if (kernel > in_h || kernel > in_w) {
      throw DimensionError("valid convolution kernel " + std::to_string(kernel) + " exceeds input " +
                           std::to_string(in_h) + "x" + std::to_string(in_w));
    }
    g.out_h = (in_h - kernel) / stride + 1;
    g.out_w = (in_w - kernel) / stride + 1;
  }
  return g;
}

namespace {

// im2col/col2im restricted to output rows [oh0, oh1); the column block is
// patch_size x ((oh1 - oh0) * out_w).
template <typename T>
void im2col_rows(const ConvGeometry& g, const T* input, std::size_t oh0, std::size_t oh1, T* columns) {
  const std::size_t k = g.kernel;
  const std::size_t rows = g.patch_size();
  const std::size_t cols = (oh1 - oh0) * g.out_w;
#pragma omp parallel for schedule(static) num_threads(thread_limit())
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = r / (k * k);
    const std::size_t ki = (r / k) % k;
    const std::size_t kj = r % k;
    const T* plane = input + c * g.in_plane();
    T* dst = columns + r * cols;
    // valid output columns for this tap: pad_left <= ow*stride + kj < in_w + pad_left
    const long lo_num = static_cast<long>(g.pad_left) - static_cast<long>(kj);
    const std::size_t ow_lo = lo_num <= 0 ? 0 : static_cast<std::size_t>((lo_num + g.stride - 1) / g.stride);
    const long hi_num = static_cast<long>(g.in_w + g.pad_left) - static_cast<long>(kj);
    const std::size_t ow_hi =
        hi_num <= 0 ? 0 : std::min(g.out_w, static_cast<std::size_t>((hi_num + g.stride - 1) / g.stride));
    for (std::size_t oh = oh0; oh < oh1; ++oh) {
      // signed arithmetic: padding can put the tap above/left of the plane
      const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad_top);
      T* out_row = dst + (oh - oh0) * g.out_w;
      if (ih < 0 || ih >= static_cast<long>(g.in_h) || ow_lo >= ow_hi) {
        std::fill(out_row, out_row + g.out_w, T(0));
        continue;
      }
      const T* in_row = plane + static_cast<std::size_t>(ih) * g.in_w + kj - g.pad_left;
      std::fill(out_row, out_row + ow_lo, T(0));
      if (g.stride == 1) {
        std::copy(in_row + ow_lo, in_row + ow_hi, out_row + ow_lo);
      } else {
        for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) out_row[ow] = in_row[ow * g.stride];
      }
      std::fill(out_row + ow_hi, out_row + g.out_w, T(0));
    }
  }
}

template <typename T>
void col2im_rows(const ConvGeometry& g, const T* columns, std::size_t oh0, std::size_t oh1, T* grad_input) {
  const std::size_t k = g.kernel;
  const std::size_t cols = (oh1 - oh0) * g.out_w;
  // One channel per iteration: all rows touching a channel stay on one thread.
#pragma omp parallel for schedule(static) num_threads(thread_limit())
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = grad_input + c * g.in_plane();
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = columns + ((c * k + ki) * k + kj) * cols;
        const long lo_num = static_cast<long>(g.pad_left) - static_cast<long>(kj);
        const std::size_t ow_lo = lo_num <= 0 ? 0 : static_cast<std::size_t>((lo_num + g.stride - 1) / g.stride);
        const long hi_num = static_cast<long>(g.in_w + g.pad_left) - static_cast<long>(kj);
        const std::size_t ow_hi =
            hi_num <= 0 ? 0 : std::min(g.out_w, static_cast<std::size_t>((hi_num + g.stride - 1) / g.stride));
        if (ow_lo >= ow_hi) continue;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad_top);
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
          T* in_row = plane + static_cast<std::size_t>(ih) * g.in_w + kj - g.pad_left;
          const T* src_row = src + (oh - oh0) * g.out_w;
          if (g.stride == 1) {
#pragma omp simd
            for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) in_row[ow] += src_row[ow];
          } else {
            for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) in_row[ow * g.stride] += src_row[ow];
          }
        }
      }
    }
  }
}

constexpr std::size_t kBlockBytes = std::size_t{1} << 20;

// Output rows per im2col block, sized so one block of columns stays in L2.
std::size_t rows_per_block(const ConvGeometry& g, std::size_t elem_size, std::size_t block_bytes) {
  const std::size_t row_bytes = g.patch_size() * g.out_w * elem_size;
  return std::clamp<std::size_t>(block_bytes / std::max<std::size_t>(row_bytes, 1), 1, g.out_h);
}

}  // namespace

template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* columns) {
  im2col_rows(g, input, 0, g.out_h, columns);
}

template <typename T>
void col2im(const ConvGeometry& g, const T* columns, T* grad_input) {
  col2im_rows(g, columns, 0, g.out_h, grad_input);
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t batch, const T* input, const T* kernels, const T* bias,
                    T* output) {
  const std::size_t patch = g.patch_size();
  const std::size_t plane = g.out_plane();
  const bool direct = g.kernel == 1 && g.stride == 1;
  const std::size_t block_rows = rows_per_block(g, sizeof(T), kBlockBytes);
  std::vector<T> columns(direct ? 0 : patch * block_rows * g.out_w);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* x = input + n * g.in_channels * g.in_plane();
    T* y = output + n * g.out_channels * plane;
    if (direct) {
      gemm(Trans::no, Trans::no, g.out_channels, plane, patch, T(1), kernels, patch, x, plane, T(0), y, plane);
    } else {
      for (std::size_t oh0 = 0; oh0 < g.out_h; oh0 += block_rows) {
        const std::size_t oh1 = std::min(g.out_h, oh0 + block_rows);
        const std::size_t cols = (oh1 - oh0) * g.out_w;
        im2col_rows(g, x, oh0, oh1, columns.data());
        gemm(Trans::no, Trans::no, g.out_channels, cols, patch, T(1), kernels, patch, columns.data(), cols, T(0),
             y + oh0 * g.out_w, plane);
      }
    }
    if (bias != nullptr) {
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        T* row = y + oc * plane;
        const T b = bias[oc];
        for (std::size_t i = 0; i < plane; ++i) row[i] += b;
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t batch, const T* input, const T* kernels,
                     const T* grad_output, T* grad_input, T* grad_kernels, T* grad_bias) {
  const std::size_t patch = g.patch_size();
  const std::size_t plane = g.out_plane();
  const bool direct = g.kernel == 1 && g.stride == 1;
  const std::size_t block_rows = rows_per_block(g, sizeof(T), kBlockBytes);
  // At stride 1 the input gradient is itself a correlation: dy against the
  // kernels flipped in both spatial axes with in/out channels swapped, padded
  // by k - 1 - pad. That keeps it on the forward path instead of col2im.
  const bool transposed_dx = grad_input != nullptr && !direct && g.stride == 1;
  const bool col2im_dx = grad_input != nullptr && !direct && !transposed_dx;
  std::vector<T> columns(direct ? 0 : patch * block_rows * g.out_w);
  std::vector<T> grad_columns(col2im_dx ? patch * block_rows * g.out_w : 0);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* x = input + n * g.in_channels * g.in_plane();
    const T* dy = grad_output + n * g.out_channels * plane;
    if (grad_bias != nullptr) {
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        const T* row = dy + oc * plane;
        T sum = 0;
        for (std::size_t i = 0; i < plane; ++i) sum += row[i];
        grad_bias[oc] += sum;
      }
    }
    T* dx = grad_input != nullptr ? grad_input + n * g.in_channels * g.in_plane() : nullptr;
    if (direct) {
      if (grad_kernels != nullptr) {
        gemm(Trans::no, Trans::yes, g.out_channels, patch, plane, T(1), dy, plane, x, plane, T(1), grad_kernels,
             patch);
      }
      if (dx != nullptr) {
        gemm(Trans::yes, Trans::no, patch, plane, g.out_channels, T(1), kernels, patch, dy, plane, T(0), dx, plane);
      }
      continue;
    }
    if (col2im_dx) std::fill(dx, dx + g.in_channels * g.in_plane(), T(0));
    for (std::size_t oh0 = 0; oh0 < g.out_h; oh0 += block_rows) {
      const std::size_t oh1 = std::min(g.out_h, oh0 + block_rows);
      const std::size_t cols = (oh1 - oh0) * g.out_w;
      const T* dy_block = dy + oh0 * g.out_w;
      if (grad_kernels != nullptr) {
        im2col_rows(g, x, oh0, oh1, columns.data());
        gemm(Trans::no, Trans::yes, g.out_channels, patch, cols, T(1), dy_block, plane, columns.data(), cols, T(1),
             grad_kernels, patch);
      }
      if (col2im_dx) {
        gemm(Trans::yes, Trans::no, patch, cols, g.out_channels, T(1), kernels, patch, dy_block, plane, T(0),
             grad_columns.data(), cols);
        col2im_rows(g, grad_columns.data(), oh0, oh1, dx);
      }
    }
  }
  if (transposed_dx) {
    const std::size_t k = g.kernel;
    ConvGeometry t;
    t.in_channels = g.out_channels;
    t.out_channels = g.in_channels;
    t.kernel = k;
    t.stride = 1;
    t.in_h = g.out_h;
    t.in_w = g.out_w;
    t.out_h = g.in_h;
    t.out_w = g.in_w;
    t.pad_top = k - 1 - g.pad_top;
    t.pad_left = k - 1 - g.pad_left;
    std::vector<T> flipped(g.out_channels * patch);
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
        for (std::size_t ki = 0; ki < k; ++ki) {
          for (std::size_t kj = 0; kj < k; ++kj) {
            flipped[((ic * g.out_channels + oc) * k + (k - 1 - ki)) * k + (k - 1 - kj)] =
                kernels[((oc * g.in_channels + ic) * k + ki) * k + kj];
          }
        }
      }
    }
    conv2d_forward(t, batch, grad_output, flipped.data(), static_cast<const T*>(nullptr), grad_input);
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t batch, const T* input, const T* kernels, const T* bias,
                    T* output) {
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          T sum = bias != nullptr ? bias[oc] : T(0);
          for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::size_t ki = 0; ki < k; ++ki) {
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad_top);
                const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad_left);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) || iw >= static_cast<long>(g.in_w)) {
                  continue;
                }
                sum += kernels[((oc * g.in_channels + ic) * k + ki) * k + kj] *
                       input[((n * g.in_channels + ic) * g.in_h + ih) * g.in_w + iw];
              }
            }
          }
          output[((n * g.out_channels + oc) * g.out_h + oh) * g.out_w + ow] = sum;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t batch, const T* input, const T* kernels,
                     const T* grad_output, T* grad_input, T* grad_kernels, T* grad_bias) {
  const std::size_t k = g.kernel;
  if (grad_input != nullptr) std::fill(grad_input, grad_input + batch * g.in_channels * g.in_plane(), T(0));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          const T dy = grad_output[((n * g.out_channels + oc) * g.out_h + oh) * g.out_w + ow];
          if (grad_bias != nullptr) grad_bias[oc] += dy;
          for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::size_t ki = 0; ki < k; ++ki) {
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad_top);
                const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad_left);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) || iw >= static_cast<long>(g.in_w)) {
                  continue;
                }
                const std::size_t wi = ((oc * g.in_channels + ic) * k + ki) * k + kj;
                const std::size_t xi = ((n * g.in_channels + ic) * g.in_h + ih) * g.in_w + iw;
                if (grad_kernels != nullptr) grad_kernels[wi] += dy * input[xi];
                if (grad_input != nullptr) grad_input[xi] += dy * kernels[wi];
              }
            }
          }
        }
      }
    }
  }
}

template void conv2d_forward<float>(const ConvGeometry&, std::size_t, const float*, const float*, const float*,
                                    float*);
template void conv2d_forward<double>(const ConvGeometry&, std::size_t, const double*, const double*,
                                     const double*, double*);
template void conv2d_backward<float>(const ConvGeometry&, std::size_t, const float*, const float*, const float*,
                                     float*, float*, float*);
template void conv2d_backward<double>(const ConvGeometry&, std::size_t, const double*, const double*,
                                      const double*, double*, double*, double*);

}  // namespace reference

template void im2col<float>(const ConvGeometry&, const float*, float*);
template void im2col<double>(const ConvGeometry&, const double*, double*);
template void col2im<float>(const ConvGeometry&, const float*, float*);
template void col2im<double>(const ConvGeometry&, const double*, double*);
template void conv2d_forward<float>(const ConvGeometry&, std::size_t, const float*, const float*, const float*,
                                    float*);
template void conv2d_forward<double>(const ConvGeometry&, std::size_t, const double*, const double*,
                                     const double*, double*);
template void conv2d_backward<float>(const ConvGeometry&, std::size_t, const float*, const float*, const float*,
                                     float*, float*, float*);
template void conv2d_backward<double>(const ConvGeometry&, std::size_t, const double*, const double*,
                                      const double*, double*, double*, double*);

}  // namespace egr::kernels
