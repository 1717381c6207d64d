#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "egr/kernels/conv.hpp"
#include "egr/rng.hpp"
#include "egr/tensor.hpp"

namespace egr {

using kernels::Padding;

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
struct ConvParams {
  Tensor<T> kernels;  // out_channels x in_channels x k x k
  Tensor<T> bias;     // out_channels
  std::size_t stride = 1;
  Padding padding = Padding::same;

  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t kernel_size() const { return kernels.dim(2); }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

template <typename T>
ConvParams<T> make_conv_params(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                               std::size_t stride, Padding padding = Padding::same);

// Zero-mean Gaussian kernels with std sqrt(2 / (in_channels * k^2)); zero bias.
template <typename T>
void he_init(ConvParams<T>& params, Rng& rng);

template <typename T>
kernels::ConvGeometry conv_geometry(const Shape& input_shape, const ConvParams<T>& params);

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvParams<T>& params);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& params, const Tensor<T>& upstream);

// Stateful wrapper: caches its input and accumulates into the parameter
// gradient buffers on backward.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  explicit Conv2d(ConvParams<T> params);

  Tensor<T> forward(const Tensor<T>& input);
  Tensor<T> infer(const Tensor<T>& input) const { return conv2d_forward(input, params_); }
  Tensor<T> backward(const Tensor<T>& upstream, bool need_input_grad = true);

  ConvParams<T>& params() { return params_; }
  const ConvParams<T>& params() const { return params_; }

 private:
  ConvParams<T> params_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double epsilon = 1e-5;
};

template <typename T>
BatchNormState<T> make_batchnorm_state(std::size_t channels);

// Per-channel batch normalization over (batch, height, width). Training mode
// uses the batch statistics (population variance) and updates the running
// statistics; inference mode uses the running statistics.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(BatchNormState<T> state) : state_(std::move(state)) {}

  Tensor<T> forward(const Tensor<T>& input, bool training);
  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream);

  BatchNormState<T>& state() { return state_; }
  const BatchNormState<T>& state() const { return state_; }

 private:
  BatchNormState<T> state_;
  Tensor<T> normalized_;
  std::vector<double> inv_std_;
  bool training_ = false;
};

// Each (sample, channel) plane normalized to zero mean and unit variance
// over its height x width entries. No learned affine.
template <typename T>
class PlaneLayerNorm {
 public:
  explicit PlaneLayerNorm(double epsilon = 1e-5) : epsilon_(epsilon) {}

  Tensor<T> forward(const Tensor<T>& input);
  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream) const;

 private:
  double epsilon_;
  Tensor<T> normalized_;
  std::vector<double> inv_std_;
};

// ---------------------------------------------------------------------------
// Elementwise, structural and classifier ops
// ---------------------------------------------------------------------------

// max(0, x); the subgradient at 0 is 0.
template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& input);
  static Tensor<T> infer(const Tensor<T>& input);
  Tensor<T> backward(const Tensor<T>& upstream) const;

 private:
  Shape shape_;
  std::vector<unsigned char> active_;  // output > 0
};

// Per sample and channel, plane P (H x W, H == W) -> P^T P.
template <typename T>
class ChannelGram {
 public:
  Tensor<T> forward(const Tensor<T>& input);
  static Tensor<T> infer(const Tensor<T>& input);
  Tensor<T> backward(const Tensor<T>& upstream) const;

 private:
  Tensor<T> input_;
};

// Channels of `a` first, then `b`.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Inverse of concat_channels: channels [0, first) and [first, C).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t first);

// (B, C, H, W) -> (B, C).
template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& input);

// (B, C) -> (B, C, H, W): each entry spread as 1/(H*W).
template <typename T>
Tensor<T> global_average_pool_backward(const Tensor<T>& upstream, std::size_t height, std::size_t width);

// out = in * W^T + b; weights num_classes x features.
template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in_features, std::size_t out_features);

  // Glorot-uniform weights, zero bias.
  void init(Rng& rng);

  Tensor<T> forward(const Tensor<T>& input);
  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream, bool need_input_grad = true);

  Tensor<T>& weights() { return weights_; }
  Tensor<T>& bias() { return bias_; }
  const Tensor<T>& weights() const { return weights_; }
  const Tensor<T>& bias() const { return bias_; }

 private:
  Tensor<T> weights_;
  Tensor<T> bias_;
  Tensor<T> input_;
};

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
struct SoftmaxCrossEntropy {
  double loss = 0.0;
  Tensor<T> logit_grad;      // (P - P_hat) / N
  Tensor<T> probabilities;
};

// Mean cross-entropy against one-hot rows. Throws InputError when a target
// row is not one-hot.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& one_hot_targets);

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, std::size_t num_classes);

}  // namespace egr
