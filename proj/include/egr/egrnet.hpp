#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "egr/layers.hpp"
#include "egr/signal.hpp"
#include "egr/tensor.hpp"

namespace egr {

enum class NetworkVariant {
  egr_net,        // both branches plus the bridge connection
  egr_net_no_bc,  // both branches, bridge removed
  cnn_rsm,        // RSM branch only
};

std::string to_string(NetworkVariant variant);
NetworkVariant parse_variant(const std::string& name);

struct GcbSpec {
  std::size_t kernel_size = 3;
  std::size_t out_channels = 32;
  std::size_t stride = 1;

  bool operator==(const GcbSpec&) const = default;
};

// Five blocks: (5,32,1) (5,32,1) (3,64,1) (3,64,2) (3,128,2).
inline constexpr std::array<GcbSpec, 5> kCanonicalBlocks{{{5, 32, 1}, {5, 32, 1}, {3, 64, 1}, {3, 64, 2}, {3, 128, 2}}};

std::vector<GcbSpec> canonical_blocks();

struct NetworkConfig {
  NetworkVariant variant = NetworkVariant::egr_net;
  std::size_t num_classes = 2;
  std::size_t input_side = 64;
  std::vector<GcbSpec> blocks = canonical_blocks();
  // Layer-normalize each input EGR plane before the first block.
  bool normalize_input_egr = true;

  bool operator==(const NetworkConfig&) const = default;
};

// Output channels and spatial side of one block, for each branch.
struct BlockShape {
  std::size_t rsm_channels = 0;
  std::size_t egr_channels = 0;  // 0 for cnn_rsm
  std::size_t side = 0;
};

// Same-padded convolution output side.
constexpr std::size_t block_output_side(std::size_t side, std::size_t stride) { return (side + stride - 1) / stride; }

// EGR-branch output channels of a block: G_h plus the bridge planes, G_h
// alone, or nothing.
constexpr std::size_t egr_branch_channels(NetworkVariant variant, std::size_t out_channels) {
  switch (variant) {
    case NetworkVariant::egr_net:
      return 2 * out_channels;
    case NetworkVariant::egr_net_no_bc:
      return out_channels;
    case NetworkVariant::cnn_rsm:
      return 0;
  }
  return 0;
}

template <std::size_t N>
constexpr std::array<BlockShape, N> shape_trace(const std::array<GcbSpec, N>& blocks, NetworkVariant variant,
                                                std::size_t input_side) {
  std::array<BlockShape, N> trace{};
  std::size_t side = input_side;
  for (std::size_t i = 0; i < N; ++i) {
    side = block_output_side(side, blocks[i].stride);
    trace[i] = {blocks[i].out_channels, egr_branch_channels(variant, blocks[i].out_channels), side};
  }
  return trace;
}

std::vector<BlockShape> shape_trace(const NetworkConfig& cfg);

// Feature count entering the classifier: final RSM channels plus final EGR channels.
std::size_t classifier_width(const NetworkConfig& cfg);

// Analytic forward FLOPs for one sample. Multiply-add counts as 2 FLOPs
// (convolutions, Grams, dense); bias adds, batch norm (scale + shift),
// ReLU, layer norm (4 per element), pooling and softmax are counted per
// element.
std::uint64_t count_flops(const NetworkConfig& cfg);

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

// conv -> batch norm -> ReLU.
template <typename T>
struct ConvBranch {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  Relu<T> relu;

  Tensor<T> forward(const Tensor<T>& input, bool training);
  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream, bool need_input_grad);
};

template <typename T>
struct BlockOutput {
  Tensor<T> x;  // RSM-branch output X_o
  Tensor<T> g;  // EGR-branch output G_o (empty for cnn_rsm)
};

// Gramian convolutional block. Both branch convolutions use the same
// (kernel, channels, stride) with independent weights. With the bridge,
// G_o = concat(G_h, LN(Gram(X_h))); without it G_o = G_h.
template <typename T>
class GramConvBlock {
 public:
  GramConvBlock(const GcbSpec& spec, std::size_t rsm_in, std::size_t egr_in, NetworkVariant variant);

  BlockOutput<T> forward(const Tensor<T>& x, const Tensor<T>& g, bool training);
  BlockOutput<T> infer(const Tensor<T>& x, const Tensor<T>& g) const;
  // Accumulates parameter gradients; returns gradients w.r.t. (x, g) when
  // need_input_grad is set, otherwise empty tensors.
  BlockOutput<T> backward(const Tensor<T>& grad_x, const Tensor<T>& grad_g, bool need_input_grad);

  const GcbSpec& spec() const { return spec_; }
  bool has_egr_branch() const { return has_egr_; }
  bool has_bridge() const { return bridge_; }
  ConvBranch<T>& rsm_branch() { return rsm_; }
  ConvBranch<T>& egr_branch() { return egr_; }
  const ConvBranch<T>& rsm_branch() const { return rsm_; }
  const ConvBranch<T>& egr_branch() const { return egr_; }

 private:
  GcbSpec spec_;
  bool has_egr_;
  bool bridge_;
  ConvBranch<T> rsm_;
  ConvBranch<T> egr_;
  ChannelGram<T> gram_;
  PlaneLayerNorm<T> bridge_norm_;
};

template <typename T>
struct NetworkOutput {
  Tensor<T> logits;
  Tensor<T> probabilities;
};

template <typename T>
class EgrNet {
 public:
  // All weights zero, gamma 1; call initialize() for a trainable start.
  explicit EgrNet(NetworkConfig cfg);

  // He-normal convolution kernels, Glorot-uniform classifier, from `seed`.
  void initialize(std::uint64_t seed);

  // rsm, egr: (B, 1, side, side). egr is ignored for cnn_rsm.
  NetworkOutput<T> forward(const Tensor<T>& rsm, const Tensor<T>& egr, bool training);
  NetworkOutput<T> infer(const Tensor<T>& rsm, const Tensor<T>& egr) const;

  // Backpropagates dLoss/dlogits through the last forward() call.
  BlockOutput<T> backward(const Tensor<T>& logit_grad, bool need_input_grad = false);

  std::vector<NamedTensor<T>> parameters();
  // Parameters plus batch-norm running statistics, in checkpoint order.
  std::vector<NamedTensor<T>> state_tensors();
  std::size_t parameter_count() const;
  void zero_grad();

  const NetworkConfig& config() const { return cfg_; }
  std::vector<GramConvBlock<T>>& blocks() { return blocks_; }
  const std::vector<GramConvBlock<T>>& blocks() const { return blocks_; }
  Dense<T>& classifier() { return classifier_; }

 private:
  void check_inputs(const Tensor<T>& rsm, const Tensor<T>& egr) const;

  NetworkConfig cfg_;
  std::vector<GramConvBlock<T>> blocks_;
  PlaneLayerNorm<T> input_norm_;
  Dense<T> classifier_;
  std::size_t final_rsm_channels_ = 0;
  std::size_t final_side_ = 0;
};

// Canonical five-block network for 64x64 inputs.
EgrNet<float> build_network(std::size_t num_classes, NetworkVariant variant, std::size_t input_side = 64);

// Index of the largest probability per row; ties go to the lowest index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& probabilities);

struct SignalPreprocessing {
  NormalizationMode normalization = NormalizationMode::variance;
  bool normalize = true;
};

// normalize -> RSM -> EGR for a batch; returns (B,1,m,n) RSM and (B,1,n,n) EGR tensors.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> network_inputs(const std::vector<Signal>& signals, RsmConfig cfg,
                                               const SignalPreprocessing& prep = {});

// Class labels for raw signals, preprocessed as in training.
template <typename T>
std::vector<int> predict(const EgrNet<T>& model, const std::vector<Signal>& signals, RsmConfig cfg,
                         const SignalPreprocessing& prep = {}, std::size_t batch_size = 32);

}  // namespace egr
