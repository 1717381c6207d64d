#include "egr/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "egr/error.hpp"
#include "egr/kernels/gemm.hpp"
#include "egr/kernels/gram.hpp"

namespace egr {

using kernels::thread_limit;

namespace {

// Reductions accumulate in double; the lane-wise order is fixed by the build,
// so results stay reproducible run to run.
template <typename T>
double sum_of(const T* x, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

template <typename T>
double centered_square_sum(const T* x, std::size_t n, double mean) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += (x[i] - mean) * (x[i] - mean);
  return s;
}

// sum(dy) and sum(dy * xh).
template <typename T>
void gradient_sums(const T* dy, const T* xh, std::size_t n, double& sum_dy, double& sum_dy_xh) {
  double a = 0.0;
  double b = 0.0;
#pragma omp simd reduction(+ : a, b)
  for (std::size_t i = 0; i < n; ++i) {
    a += dy[i];
    b += static_cast<double>(dy[i]) * xh[i];
  }
  sum_dy += a;
  sum_dy_xh += b;
}

// dx = scale * (dy - mean_dy - xh * mean_dy_xh)
template <typename T>
void normalization_input_grad(const T* dy, const T* xh, std::size_t n, double scale, double mean_dy,
                              double mean_dy_xh, T* dx) {
  const T a = static_cast<T>(scale);
  const T b = static_cast<T>(mean_dy);
  const T c = static_cast<T>(mean_dy_xh);
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) dx[i] = a * (dy[i] - b - xh[i] * c);
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
ConvParams<T> make_conv_params(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                               std::size_t stride, Padding padding) {
  if (stride == 0) throw DimensionError("convolution stride must be positive");
  ConvParams<T> p;
  p.kernels = Tensor<T>({out_channels, in_channels, kernel, kernel});
  p.bias = Tensor<T>({out_channels});
  p.kernels.enable_grad();
  p.bias.enable_grad();
  p.stride = stride;
  p.padding = padding;
  return p;
}

template <typename T>
void he_init(ConvParams<T>& params, Rng& rng) {
  const double fan_in = static_cast<double>(params.in_channels() * params.kernel_size() * params.kernel_size());
  const double std = std::sqrt(2.0 / fan_in);
  for (T& w : params.kernels.data()) w = static_cast<T>(std * rng.gaussian());
  params.bias.fill(T(0));
}

template <typename T>
kernels::ConvGeometry conv_geometry(const Shape& input_shape, const ConvParams<T>& params) {
  if (input_shape.size() != 4) throw DimensionError("conv2d: expected 4-D input, got " + shape_str(input_shape));
  if (input_shape[1] != params.in_channels()) {
    throw DimensionError("conv2d: input has " + std::to_string(input_shape[1]) + " channels, kernels expect " +
                         std::to_string(params.in_channels()));
  }
  return kernels::ConvGeometry::make(params.in_channels(), params.out_channels(), params.kernel_size(),
                                     params.stride, params.padding, input_shape[2], input_shape[3]);
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvParams<T>& params) {
  const auto g = conv_geometry(input.shape(), params);
  Tensor<T> out({input.dim(0), g.out_channels, g.out_h, g.out_w});
  kernels::conv2d_forward(g, input.dim(0), input.raw(), params.kernels.raw(), params.bias.raw(), out.raw());
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& params, const Tensor<T>& upstream) {
  const auto g = conv_geometry(input.shape(), params);
  const Shape expected{input.dim(0), g.out_channels, g.out_h, g.out_w};
  if (upstream.shape() != expected) {
    throw DimensionError("conv2d backward: upstream " + shape_str(upstream.shape()) + " != " + shape_str(expected));
  }
  ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(params.kernels.shape()), Tensor<T>(params.bias.shape())};
  kernels::conv2d_backward(g, input.dim(0), input.raw(), params.kernels.raw(), upstream.raw(), grads.input.raw(),
                           grads.kernels.raw(), grads.bias.raw());
  return grads;
}

template <typename T>
Conv2d<T>::Conv2d(ConvParams<T> params) : params_(std::move(params)) {
  params_.kernels.enable_grad();
  params_.bias.enable_grad();
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& input) {
  input_ = input;
  return conv2d_forward(input, params_);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& upstream, bool need_input_grad) {
  if (input_.empty()) throw Error("conv2d backward called before forward");
  const auto g = conv_geometry(input_.shape(), params_);
  Tensor<T> grad_input;
  if (need_input_grad) grad_input = Tensor<T>(input_.shape());
  kernels::conv2d_backward(g, input_.dim(0), input_.raw(), params_.kernels.raw(), upstream.raw(),
                           need_input_grad ? grad_input.raw() : nullptr, params_.kernels.grad().data(),
                           params_.bias.grad().data());
  return grad_input;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <typename T>
BatchNormState<T> make_batchnorm_state(std::size_t channels) {
  BatchNormState<T> s;
  s.gamma = Tensor<T>({channels}, T(1));
  s.beta = Tensor<T>({channels}, T(0));
  s.running_mean = Tensor<T>({channels}, T(0));
  s.running_var = Tensor<T>({channels}, T(1));
  s.gamma.enable_grad();
  s.beta.enable_grad();
  return s;
}

namespace {

template <typename T>
void check_bn_input(const Tensor<T>& input, const BatchNormState<T>& s) {
  require_rank(input, 4, "batchnorm");
  if (input.dim(1) != s.gamma.size()) {
    throw DimensionError("batchnorm: input has " + std::to_string(input.dim(1)) + " channels, state has " +
                         std::to_string(s.gamma.size()));
  }
}

}  // namespace

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& input, bool training) {
  check_bn_input(input, state_);
  training_ = training;
  const std::size_t batch = input.dim(0);
  const std::size_t channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  const double count = static_cast<double>(batch * plane);
  normalized_ = Tensor<T>(input.shape());
  inv_std_.assign(channels, 0.0);
  Tensor<T> out(input.shape());

#pragma omp parallel for schedule(static) num_threads(thread_limit())
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (training) {
      for (std::size_t n = 0; n < batch; ++n) mean += sum_of(input.plane(n, c), plane);
      mean /= count;
      for (std::size_t n = 0; n < batch; ++n) var += centered_square_sum(input.plane(n, c), plane, mean);
      var /= count;
      const double mom = state_.momentum;
      state_.running_mean[c] = static_cast<T>(mom * state_.running_mean[c] + (1.0 - mom) * mean);
      state_.running_var[c] = static_cast<T>(mom * state_.running_var[c] + (1.0 - mom) * var);
    } else {
      mean = state_.running_mean[c];
      var = state_.running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + state_.epsilon);
    inv_std_[c] = inv;
    const T m = static_cast<T>(mean);
    const T s = static_cast<T>(inv);
    const T gamma = state_.gamma[c];
    const T beta = state_.beta[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const T* x = input.plane(n, c);
      T* xh = normalized_.plane(n, c);
      T* y = out.plane(n, c);
#pragma omp simd
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (x[i] - m) * s;
        xh[i] = h;
        y[i] = gamma * h + beta;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::infer(const Tensor<T>& input) const {
  check_bn_input(input, state_);
  const std::size_t batch = input.dim(0);
  const std::size_t channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  Tensor<T> out(input.shape());
#pragma omp parallel for schedule(static) num_threads(thread_limit())
  for (std::size_t c = 0; c < channels; ++c) {
    const double mean = state_.running_mean[c];
    const double inv = 1.0 / std::sqrt(static_cast<double>(state_.running_var[c]) + state_.epsilon);
    const double gamma = state_.gamma[c];
    const double beta = state_.beta[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const T* x = input.plane(n, c);
      T* y = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) y[i] = static_cast<T>(gamma * ((x[i] - mean) * inv) + beta);
    }
  }
  return out;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& upstream) {
  if (upstream.shape() != normalized_.shape()) {
    throw DimensionError("batchnorm backward: upstream " + shape_str(upstream.shape()) + " != " +
                         shape_str(normalized_.shape()));
  }
  const std::size_t batch = upstream.dim(0);
  const std::size_t channels = upstream.dim(1);
  const std::size_t plane = upstream.dim(2) * upstream.dim(3);
  const double count = static_cast<double>(batch * plane);
  Tensor<T> grad(upstream.shape());
  auto dgamma = state_.gamma.grad();
  auto dbeta = state_.beta.grad();

#pragma omp parallel for schedule(static) num_threads(thread_limit())
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      gradient_sums(upstream.plane(n, c), normalized_.plane(n, c), plane, sum_dy, sum_dy_xh);
    }
    dgamma[c] += static_cast<T>(sum_dy_xh);
    dbeta[c] += static_cast<T>(sum_dy);
    const double scale = static_cast<double>(state_.gamma[c]) * inv_std_[c];
    // Inference-mode statistics are constants, so only the scale remains.
    const double mean_dy = training_ ? sum_dy / count : 0.0;
    const double mean_dy_xh = training_ ? sum_dy_xh / count : 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      normalization_input_grad(upstream.plane(n, c), normalized_.plane(n, c), plane, scale, mean_dy, mean_dy_xh,
                               grad.plane(n, c));
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Plane layer normalization
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void layer_norm_planes(const Tensor<T>& input, double epsilon, Tensor<T>& out, std::vector<double>* inv_std) {
  require_rank(input, 4, "layernorm");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t size = input.dim(2) * input.dim(3);
  out = Tensor<T>(input.shape());
  if (inv_std != nullptr) inv_std->assign(planes, 0.0);
#pragma omp parallel for schedule(static) num_threads(thread_limit())
  for (std::size_t p = 0; p < planes; ++p) {
    const T* x = input.raw() + p * size;
    T* y = out.raw() + p * size;
    const double mean = sum_of(x, size) / static_cast<double>(size);
    const double var = centered_square_sum(x, size, mean) / static_cast<double>(size);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    if (inv_std != nullptr) (*inv_std)[p] = inv;
    const T m = static_cast<T>(mean);
    const T s = static_cast<T>(inv);
#pragma omp simd
    for (std::size_t i = 0; i < size; ++i) y[i] = (x[i] - m) * s;
  }
}

}  // namespace

template <typename T>
Tensor<T> PlaneLayerNorm<T>::forward(const Tensor<T>& input) {
  layer_norm_planes(input, epsilon_, normalized_, &inv_std_);
  return normalized_;
}

template <typename T>
Tensor<T> PlaneLayerNorm<T>::infer(const Tensor<T>& input) const {
  Tensor<T> out;
  layer_norm_planes(input, epsilon_, out, nullptr);
  return out;
}

template <typename T>
Tensor<T> PlaneLayerNorm<T>::backward(const Tensor<T>& upstream) const {
  if (upstream.shape() != normalized_.shape()) {
    throw DimensionError("layernorm backward: upstream " + shape_str(upstream.shape()) + " != " +
                         shape_str(normalized_.shape()));
  }
  const std::size_t planes = upstream.dim(0) * upstream.dim(1);
  const std::size_t size = upstream.dim(2) * upstream.dim(3);
  const double count = static_cast<double>(size);
  Tensor<T> grad(upstream.shape());
#pragma omp parallel for schedule(static) num_threads(thread_limit())
  for (std::size_t p = 0; p < planes; ++p) {
    const T* dy = upstream.raw() + p * size;
    const T* xh = normalized_.raw() + p * size;
    T* dx = grad.raw() + p * size;
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    gradient_sums(dy, xh, size, sum_dy, sum_dy_xh);
    normalization_input_grad(dy, xh, size, inv_std_[p], sum_dy / count, sum_dy_xh / count, dx);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& input) {
  Tensor<T> out = infer(input);
  shape_ = out.shape();
  active_.resize(out.size());
  const T* y = out.raw();
  unsigned char* mask = active_.data();
  const std::size_t n = out.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) mask[i] = y[i] > T(0);
  return out;
}

template <typename T>
Tensor<T> Relu<T>::infer(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const T* x = input.raw();
  T* y = out.raw();
  const std::size_t n = input.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& upstream) const {
  if (upstream.shape() != shape_) throw DimensionError("relu backward: shape mismatch");
  Tensor<T> grad(upstream.shape());
  const std::size_t n = upstream.size();
  const unsigned char* mask = active_.data();
  const T* dy = upstream.raw();
  T* dx = grad.raw();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) dx[i] = mask[i] ? dy[i] : T(0);
  return grad;
}

// ---------------------------------------------------------------------------
// Channel Gram
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_square_planes(const Tensor<T>& input) {
  require_rank(input, 4, "channel_gram");
  if (input.dim(2) != input.dim(3)) {
    throw DimensionError("channel_gram: planes must be square, got " + shape_str(input.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> ChannelGram<T>::forward(const Tensor<T>& input) {
  input_ = input;
  return infer(input);
}

template <typename T>
Tensor<T> ChannelGram<T>::infer(const Tensor<T>& input) {
  check_square_planes(input);
  const std::size_t w = input.dim(3);
  Tensor<T> out({input.dim(0), input.dim(1), w, w});
  kernels::plane_gram_forward(input.dim(0) * input.dim(1), input.dim(2), w, input.raw(), out.raw());
  return out;
}

template <typename T>
Tensor<T> ChannelGram<T>::backward(const Tensor<T>& upstream) const {
  const std::size_t w = input_.dim(3);
  if (upstream.shape() != Shape{input_.dim(0), input_.dim(1), w, w}) {
    throw DimensionError("channel_gram backward: shape mismatch");
  }
  Tensor<T> grad(input_.shape());
  kernels::plane_gram_backward(input_.dim(0) * input_.dim(1), input_.dim(2), w, input_.raw(), upstream.raw(),
                               grad.raw());
  return grad;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " disagree on batch or spatial size");
  }
  const std::size_t batch = a.dim(0);
  const std::size_t ca = a.dim(1);
  const std::size_t cb = b.dim(1);
  const std::size_t plane = a.dim(2) * a.dim(3);
  Tensor<T> out({batch, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.plane(n, 0), ca * plane, out.plane(n, 0));
    std::copy_n(b.plane(n, 0), cb * plane, out.plane(n, ca));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t first) {
  require_rank(t, 4, "split_channels");
  if (first == 0 || first >= t.dim(1)) throw DimensionError("split_channels: split point out of range");
  const std::size_t batch = t.dim(0);
  const std::size_t rest = t.dim(1) - first;
  const std::size_t plane = t.dim(2) * t.dim(3);
  Tensor<T> a({batch, first, t.dim(2), t.dim(3)});
  Tensor<T> b({batch, rest, t.dim(2), t.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(t.plane(n, 0), first * plane, a.plane(n, 0));
    std::copy_n(t.plane(n, first), rest * plane, b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& input) {
  require_rank(input, 4, "global_average_pool");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t size = input.dim(2) * input.dim(3);
  Tensor<T> out({input.dim(0), input.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* x = input.raw() + p * size;
    out[p] = static_cast<T>(sum_of(x, size) / static_cast<double>(size));
  }
  return out;
}

template <typename T>
Tensor<T> global_average_pool_backward(const Tensor<T>& upstream, std::size_t height, std::size_t width) {
  require_rank(upstream, 2, "global_average_pool backward");
  Tensor<T> grad({upstream.dim(0), upstream.dim(1), height, width});
  const std::size_t size = height * width;
  const double inv = 1.0 / static_cast<double>(size);
  for (std::size_t p = 0; p < upstream.size(); ++p) {
    std::fill_n(grad.raw() + p * size, size, static_cast<T>(upstream[p] * inv));
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

template <typename T>
Dense<T>::Dense(std::size_t in_features, std::size_t out_features)
    : weights_({out_features, in_features}), bias_({out_features}) {
  weights_.enable_grad();
  bias_.enable_grad();
}

template <typename T>
void Dense<T>::init(Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(weights_.dim(0) + weights_.dim(1)));
  for (T& w : weights_.data()) w = static_cast<T>(rng.uniform(-limit, limit));
  bias_.fill(T(0));
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  require_rank(input, 2, "dense");
  if (input.dim(1) != weights.dim(1)) {
    throw DimensionError("dense: input has " + std::to_string(input.dim(1)) + " features, weights expect " +
                         std::to_string(weights.dim(1)));
  }
  const std::size_t batch = input.dim(0);
  const std::size_t in = weights.dim(1);
  const std::size_t out_f = weights.dim(0);
  Tensor<T> out({batch, out_f});
  kernels::gemm(kernels::Trans::no, kernels::Trans::yes, batch, out_f, in, T(1), input.raw(), in, weights.raw(), in,
                T(0), out.raw(), out_f);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t j = 0; j < out_f; ++j) out[n * out_f + j] += bias[j];
  }
  return out;
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& input) {
  input_ = input;
  return dense_forward(input, weights_, bias_);
}

template <typename T>
Tensor<T> Dense<T>::infer(const Tensor<T>& input) const {
  return dense_forward(input, weights_, bias_);
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& upstream, bool need_input_grad) {
  const std::size_t batch = input_.dim(0);
  const std::size_t in = weights_.dim(1);
  const std::size_t out_f = weights_.dim(0);
  if (upstream.shape() != Shape{batch, out_f}) throw DimensionError("dense backward: shape mismatch");
  kernels::gemm(kernels::Trans::yes, kernels::Trans::no, out_f, in, batch, T(1), upstream.raw(), out_f,
                input_.raw(), in, T(1), weights_.grad().data(), in);
  auto db = bias_.grad();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t j = 0; j < out_f; ++j) db[j] += upstream[n * out_f + j];
  }
  Tensor<T> grad;
  if (need_input_grad) {
    grad = Tensor<T>(input_.shape());
    kernels::gemm(kernels::Trans::no, kernels::Trans::no, batch, in, out_f, T(1), upstream.raw(), out_f,
                  weights_.raw(), in, T(0), grad.raw(), in);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Softmax / cross-entropy
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t rows = logits.dim(0);
  const std::size_t k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* q = logits.raw() + r * k;
    const double mx = *std::max_element(q, q + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(q[j] - mx);
    for (std::size_t j = 0; j < k; ++j) p[r * k + j] = static_cast<T>(std::exp(q[j] - mx) / sum);
  }
  return p;
}

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& one_hot_targets) {
  require_rank(logits, 2, "softmax_cross_entropy");
  if (one_hot_targets.shape() != logits.shape()) {
    throw DimensionError("softmax_cross_entropy: targets " + shape_str(one_hot_targets.shape()) +
                         " do not match logits " + shape_str(logits.shape()));
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t k = logits.dim(1);
  SoftmaxCrossEntropy<T> result;
  result.logit_grad = Tensor<T>(logits.shape());
  result.probabilities = Tensor<T>(logits.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* q = logits.raw() + r * k;
    const T* t = one_hot_targets.raw() + r * k;
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (t[j] == T(1)) {
        ++ones;
      } else if (t[j] != T(0)) {
        ones = 2;
        break;
      }
    }
    if (ones != 1) throw InputError("softmax_cross_entropy: target row " + std::to_string(r) + " is not one-hot");
    const double mx = *std::max_element(q, q + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(q[j] - mx);
    const double log_sum = std::log(sum);
    for (std::size_t j = 0; j < k; ++j) {
      const double log_p = q[j] - mx - log_sum;
      const double p = std::exp(log_p);
      result.probabilities[r * k + j] = static_cast<T>(p);
      result.logit_grad[r * k + j] = static_cast<T>((p - t[j]) / static_cast<double>(rows));
      if (t[j] == T(1)) total -= log_p;
    }
  }
  result.loss = total / static_cast<double>(rows);
  return result;
}

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, std::size_t num_classes) {
  Tensor<T> out({labels.size(), num_classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= num_classes) {
      throw InputError("label " + std::to_string(labels[r]) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    out[r * num_classes + static_cast<std::size_t>(labels[r])] = T(1);
  }
  return out;
}

#define EGR_INSTANTIATE_LAYERS(T)                                                                          \
  template ConvParams<T> make_conv_params<T>(std::size_t, std::size_t, std::size_t, std::size_t, Padding); \
  template void he_init<T>(ConvParams<T>&, Rng&);                                                          \
  template kernels::ConvGeometry conv_geometry<T>(const Shape&, const ConvParams<T>&);                     \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const ConvParams<T>&);                            \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const ConvParams<T>&, const Tensor<T>&);      \
  template class Conv2d<T>;                                                                                \
  template BatchNormState<T> make_batchnorm_state<T>(std::size_t);                                         \
  template class BatchNorm2d<T>;                                                                           \
  template class PlaneLayerNorm<T>;                                                                        \
  template class Relu<T>;                                                                                  \
  template class ChannelGram<T>;                                                                           \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template std::pair<Tensor<T>, Tensor<T>> split_channels<T>(const Tensor<T>&, std::size_t);               \
  template Tensor<T> global_average_pool<T>(const Tensor<T>&);                                             \
  template Tensor<T> global_average_pool_backward<T>(const Tensor<T>&, std::size_t, std::size_t);          \
  template class Dense<T>;                                                                                 \
  template Tensor<T> dense_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                         \
  template SoftmaxCrossEntropy<T> softmax_cross_entropy<T>(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> one_hot<T>(const std::vector<int>&, std::size_t);

EGR_INSTANTIATE_LAYERS(float)
EGR_INSTANTIATE_LAYERS(double)

}  // namespace egr
