#pragma once

#include <cstddef>

namespace egr::kernels {

enum class Padding { same, valid };

// Spatial bookkeeping for one 2-D convolution. "same" follows the usual
// TensorFlow rule: output = ceil(input / stride), total padding
// max((out - 1) * stride + k - in, 0), with the smaller half on top/left.
struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;

  static ConvGeometry make(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                           std::size_t stride, Padding padding, std::size_t in_h, std::size_t in_w);

  std::size_t patch_size() const { return in_channels * kernel * kernel; }
  std::size_t in_plane() const { return in_h * in_w; }
  std::size_t out_plane() const { return out_h * out_w; }
};

// Cross-correlation. input: batch x in_c x in_h x in_w; kernels: out_c x in_c x k x k;
// bias: out_c (may be null); output: batch x out_c x out_h x out_w (overwritten).
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t batch, const T* input, const T* kernels, const T* bias,
                    T* output);

// grad_input is overwritten (skipped when null); grad_kernels and grad_bias
// are accumulated into (each skipped when null).
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t batch, const T* input, const T* kernels,
                     const T* grad_output, T* grad_input, T* grad_kernels, T* grad_bias);

// Unfolds one sample into a patch_size x out_plane matrix.
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* columns);

// Adds a patch_size x out_plane matrix back into one sample's input gradient.
template <typename T>
void col2im(const ConvGeometry& g, const T* columns, T* grad_input);

namespace reference {

// Direct nested-loop convolution; same contracts as the fast path.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t batch, const T* input, const T* kernels, const T* bias,
                    T* output);

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t batch, const T* input, const T* kernels,
                     const T* grad_output, T* grad_input, T* grad_kernels, T* grad_bias);

}  // namespace reference
}  // namespace egr::kernels
