#include "egr/egrnet.hpp"

#include <algorithm>
#include <string>

#include "egr/error.hpp"
#include "egr/rng.hpp"

namespace egr {

std::string to_string(NetworkVariant variant) {
  switch (variant) {
    case NetworkVariant::egr_net:
      return "egr_net";
    case NetworkVariant::egr_net_no_bc:
      return "egr_net_no_bc";
    case NetworkVariant::cnn_rsm:
      return "cnn_rsm";
  }
  return "unknown";
}

NetworkVariant parse_variant(const std::string& name) {
  if (name == "egr_net" || name == "EgrNet" || name == "egr-net") return NetworkVariant::egr_net;
  if (name == "egr_net_no_bc" || name == "EgrNetNoBc" || name == "egr-net-no-bc") return NetworkVariant::egr_net_no_bc;
  if (name == "cnn_rsm" || name == "CnnRsm" || name == "cnn-rsm") return NetworkVariant::cnn_rsm;
  throw ConfigError("unknown network variant '" + name + "' (expected egr_net, egr_net_no_bc or cnn_rsm)");
}

std::vector<GcbSpec> canonical_blocks() { return {kCanonicalBlocks.begin(), kCanonicalBlocks.end()}; }

std::vector<BlockShape> shape_trace(const NetworkConfig& cfg) {
  std::vector<BlockShape> trace;
  std::size_t side = cfg.input_side;
  for (const GcbSpec& b : cfg.blocks) {
    side = block_output_side(side, b.stride);
    trace.push_back({b.out_channels, egr_branch_channels(cfg.variant, b.out_channels), side});
  }
  return trace;
}

std::size_t classifier_width(const NetworkConfig& cfg) {
  if (cfg.blocks.empty()) throw ConfigError("network needs at least one block");
  const BlockShape last = shape_trace(cfg).back();
  return last.rsm_channels + last.egr_channels;
}

std::uint64_t count_flops(const NetworkConfig& cfg) {
  using u64 = std::uint64_t;
  const auto conv = [](u64 cin, u64 cout, u64 k, u64 side) {
    const u64 plane = side * side;
    return 2 * cin * k * k * cout * plane + cout * plane;  // MACs plus bias
  };
  const bool two_branch = cfg.variant != NetworkVariant::cnn_rsm;
  const bool bridge = cfg.variant == NetworkVariant::egr_net;
  u64 flops = 0;
  u64 side = cfg.input_side;
  if (two_branch && cfg.normalize_input_egr) flops += 4 * side * side;
  u64 rsm_in = 1;
  u64 egr_in = 1;
  for (const GcbSpec& b : cfg.blocks) {
    side = (side + b.stride - 1) / b.stride;
    const u64 c = b.out_channels;
    const u64 plane = side * side;
    const u64 post_conv = 2 * c * plane + c * plane;  // batch norm + ReLU
    flops += conv(rsm_in, c, b.kernel_size, side) + post_conv;
    if (two_branch) flops += conv(egr_in, c, b.kernel_size, side) + post_conv;
    if (bridge) flops += 2 * c * side * side * side + 4 * c * plane;  // Gram + layer norm
    rsm_in = c;
    egr_in = bridge ? 2 * c : c;
  }
  const u64 width = classifier_width(cfg);
  const u64 k = cfg.num_classes;
  flops += width * side * side;   // pooling
  flops += 2 * width * k + k;     // classifier
  flops += 3 * k;                 // softmax
  return flops;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> ConvBranch<T>::forward(const Tensor<T>& input, bool training) {
  return relu.forward(bn.forward(conv.forward(input), training));
}

template <typename T>
Tensor<T> ConvBranch<T>::infer(const Tensor<T>& input) const {
  return Relu<T>::infer(bn.infer(conv.infer(input)));
}

template <typename T>
Tensor<T> ConvBranch<T>::backward(const Tensor<T>& upstream, bool need_input_grad) {
  return conv.backward(bn.backward(relu.backward(upstream)), need_input_grad);
}

template <typename T>
GramConvBlock<T>::GramConvBlock(const GcbSpec& spec, std::size_t rsm_in, std::size_t egr_in, NetworkVariant variant)
    : spec_(spec),
      has_egr_(variant != NetworkVariant::cnn_rsm),
      bridge_(variant == NetworkVariant::egr_net) {
  if (spec.kernel_size == 0 || spec.out_channels == 0 || spec.stride == 0) {
    throw ConfigError("block kernel, channels and stride must be positive");
  }
  rsm_.conv = Conv2d<T>(make_conv_params<T>(rsm_in, spec.out_channels, spec.kernel_size, spec.stride));
  rsm_.bn = BatchNorm2d<T>(make_batchnorm_state<T>(spec.out_channels));
  if (has_egr_) {
    egr_.conv = Conv2d<T>(make_conv_params<T>(egr_in, spec.out_channels, spec.kernel_size, spec.stride));
    egr_.bn = BatchNorm2d<T>(make_batchnorm_state<T>(spec.out_channels));
  }
}

template <typename T>
BlockOutput<T> GramConvBlock<T>::forward(const Tensor<T>& x, const Tensor<T>& g, bool training) {
  BlockOutput<T> out;
  out.x = rsm_.forward(x, training);
  if (!has_egr_) return out;
  Tensor<T> g_h = egr_.forward(g, training);
  if (g_h.dim(2) != out.x.dim(2) || g_h.dim(3) != out.x.dim(3)) {
    throw DimensionError("GCB: branch outputs differ spatially, RSM " + shape_str(out.x.shape()) + " vs EGR " +
                         shape_str(g_h.shape()));
  }
  out.g = bridge_ ? concat_channels(g_h, bridge_norm_.forward(gram_.forward(out.x))) : std::move(g_h);
  return out;
}

template <typename T>
BlockOutput<T> GramConvBlock<T>::infer(const Tensor<T>& x, const Tensor<T>& g) const {
  BlockOutput<T> out;
  out.x = rsm_.infer(x);
  if (!has_egr_) return out;
  Tensor<T> g_h = egr_.infer(g);
  if (g_h.dim(2) != out.x.dim(2) || g_h.dim(3) != out.x.dim(3)) {
    throw DimensionError("GCB: branch outputs differ spatially, RSM " + shape_str(out.x.shape()) + " vs EGR " +
                         shape_str(g_h.shape()));
  }
  out.g = bridge_ ? concat_channels(g_h, bridge_norm_.infer(ChannelGram<T>::infer(out.x))) : std::move(g_h);
  return out;
}

template <typename T>
BlockOutput<T> GramConvBlock<T>::backward(const Tensor<T>& grad_x, const Tensor<T>& grad_g, bool need_input_grad) {
  BlockOutput<T> grads;
  Tensor<T> d_xh = grad_x;
  if (has_egr_) {
    Tensor<T> d_gh;
    if (bridge_) {
      auto [dg_h, d_bridge] = split_channels(grad_g, spec_.out_channels);
      const Tensor<T> d_xh_bridge = gram_.backward(bridge_norm_.backward(d_bridge));
      for (std::size_t i = 0; i < d_xh.size(); ++i) d_xh[i] += d_xh_bridge[i];
      d_gh = std::move(dg_h);
    } else {
      d_gh = grad_g;
    }
    grads.g = egr_.backward(d_gh, need_input_grad);
  }
  grads.x = rsm_.backward(d_xh, need_input_grad);
  return grads;
}

// ---------------------------------------------------------------------------

template <typename T>
EgrNet<T>::EgrNet(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.num_classes == 0) throw ConfigError("num_classes must be positive");
  if (cfg_.input_side == 0) throw ConfigError("input_side must be positive");
  if (cfg_.blocks.empty()) throw ConfigError("network needs at least one block");
  std::size_t rsm_in = 1;
  std::size_t egr_in = 1;
  for (const GcbSpec& spec : cfg_.blocks) {
    blocks_.emplace_back(spec, rsm_in, egr_in, cfg_.variant);
    rsm_in = spec.out_channels;
    egr_in = cfg_.variant == NetworkVariant::egr_net ? 2 * spec.out_channels : spec.out_channels;
  }
  classifier_ = Dense<T>(classifier_width(cfg_), cfg_.num_classes);
  const auto trace = shape_trace(cfg_);
  final_rsm_channels_ = trace.back().rsm_channels;
  final_side_ = trace.back().side;
}

template <typename T>
void EgrNet<T>::initialize(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x696E6974ULL}));
  for (auto& block : blocks_) {
    he_init(block.rsm_branch().conv.params(), rng);
    if (block.has_egr_branch()) he_init(block.egr_branch().conv.params(), rng);
  }
  classifier_.init(rng);
}

template <typename T>
void EgrNet<T>::check_inputs(const Tensor<T>& rsm, const Tensor<T>& egr) const {
  const Shape expected{rsm.rank() == 4 ? rsm.dim(0) : 0, 1, cfg_.input_side, cfg_.input_side};
  if (rsm.shape() != expected) {
    throw DimensionError("RSM batch must be (B,1," + std::to_string(cfg_.input_side) + "," +
                         std::to_string(cfg_.input_side) + "), got " + shape_str(rsm.shape()));
  }
  if (cfg_.variant == NetworkVariant::cnn_rsm) return;
  if (egr.empty()) throw InputError(to_string(cfg_.variant) + " needs an EGR batch");
  if (egr.shape() != expected) {
    throw DimensionError("EGR batch must match the RSM batch " + shape_str(expected) + ", got " +
                         shape_str(egr.shape()));
  }
}

template <typename T>
NetworkOutput<T> EgrNet<T>::forward(const Tensor<T>& rsm, const Tensor<T>& egr, bool training) {
  check_inputs(rsm, egr);
  const bool two_branch = cfg_.variant != NetworkVariant::cnn_rsm;
  Tensor<T> x = rsm;
  Tensor<T> g;
  if (two_branch) g = cfg_.normalize_input_egr ? input_norm_.forward(egr) : egr;
  for (auto& block : blocks_) {
    BlockOutput<T> out = block.forward(x, g, training);
    x = std::move(out.x);
    g = std::move(out.g);
  }
  const Tensor<T> features = global_average_pool(two_branch ? concat_channels(x, g) : x);
  NetworkOutput<T> out;
  out.logits = classifier_.forward(features);
  out.probabilities = softmax(out.logits);
  return out;
}

template <typename T>
NetworkOutput<T> EgrNet<T>::infer(const Tensor<T>& rsm, const Tensor<T>& egr) const {
  check_inputs(rsm, egr);
  const bool two_branch = cfg_.variant != NetworkVariant::cnn_rsm;
  Tensor<T> x = rsm;
  Tensor<T> g;
  if (two_branch) g = cfg_.normalize_input_egr ? input_norm_.infer(egr) : egr;
  for (const auto& block : blocks_) {
    BlockOutput<T> out = block.infer(x, g);
    x = std::move(out.x);
    g = std::move(out.g);
  }
  const Tensor<T> features = global_average_pool(two_branch ? concat_channels(x, g) : x);
  NetworkOutput<T> out;
  out.logits = classifier_.infer(features);
  out.probabilities = softmax(out.logits);
  return out;
}

template <typename T>
BlockOutput<T> EgrNet<T>::backward(const Tensor<T>& logit_grad, bool need_input_grad) {
  const Tensor<T> d_features = classifier_.backward(logit_grad);
  const Tensor<T> d_map = global_average_pool_backward(d_features, final_side_, final_side_);
  Tensor<T> dx;
  Tensor<T> dg;
  if (cfg_.variant == NetworkVariant::cnn_rsm) {
    dx = d_map;
  } else {
    std::tie(dx, dg) = split_channels(d_map, final_rsm_channels_);
  }
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    BlockOutput<T> grads = blocks_[i].backward(dx, dg, i > 0 || need_input_grad);
    dx = std::move(grads.x);
    dg = std::move(grads.g);
  }
  if (need_input_grad && cfg_.variant != NetworkVariant::cnn_rsm && cfg_.normalize_input_egr) {
    dg = input_norm_.backward(dg);
  }
  return {std::move(dx), std::move(dg)};
}

template <typename T>
std::vector<NamedTensor<T>> EgrNet<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  const auto add_branch = [&](const std::string& prefix, ConvBranch<T>& br) {
    out.push_back({prefix + ".conv.kernels", &br.conv.params().kernels});
    out.push_back({prefix + ".conv.bias", &br.conv.params().bias});
    out.push_back({prefix + ".bn.gamma", &br.bn.state().gamma});
    out.push_back({prefix + ".bn.beta", &br.bn.state().beta});
  };
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    add_branch(prefix + ".rsm", blocks_[i].rsm_branch());
    if (blocks_[i].has_egr_branch()) add_branch(prefix + ".egr", blocks_[i].egr_branch());
  }
  out.push_back({"classifier.weights", &classifier_.weights()});
  out.push_back({"classifier.bias", &classifier_.bias()});
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> EgrNet<T>::state_tensors() {
  std::vector<NamedTensor<T>> out = parameters();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    out.push_back({prefix + ".rsm.bn.running_mean", &blocks_[i].rsm_branch().bn.state().running_mean});
    out.push_back({prefix + ".rsm.bn.running_var", &blocks_[i].rsm_branch().bn.state().running_var});
    if (blocks_[i].has_egr_branch()) {
      out.push_back({prefix + ".egr.bn.running_mean", &blocks_[i].egr_branch().bn.state().running_mean});
      out.push_back({prefix + ".egr.bn.running_var", &blocks_[i].egr_branch().bn.state().running_var});
    }
  }
  return out;
}

template <typename T>
std::size_t EgrNet<T>::parameter_count() const {
  const auto branch = [](const ConvBranch<T>& br) {
    return br.conv.params().kernels.size() + br.conv.params().bias.size() + br.bn.state().gamma.size() +
           br.bn.state().beta.size();
  };
  std::size_t total = classifier_.weights().size() + classifier_.bias().size();
  for (const auto& block : blocks_) {
    total += branch(block.rsm_branch());
    if (block.has_egr_branch()) total += branch(block.egr_branch());
  }
  return total;
}

template <typename T>
void EgrNet<T>::zero_grad() {
  for (NamedTensor<T>& p : parameters()) p.tensor->zero_grad();
}

EgrNet<float> build_network(std::size_t num_classes, NetworkVariant variant, std::size_t input_side) {
  NetworkConfig cfg;
  cfg.variant = variant;
  cfg.num_classes = num_classes;
  cfg.input_side = input_side;
  return EgrNet<float>(cfg);
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& probabilities) {
  require_rank(probabilities, 2, "argmax_rows");
  const std::size_t rows = probabilities.dim(0);
  const std::size_t k = probabilities.dim(1);
  std::vector<int> labels(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = probabilities.raw() + r * k;
    labels[r] = static_cast<int>(std::max_element(p, p + k) - p);  // first maximum
  }
  return labels;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> network_inputs(const std::vector<Signal>& signals, RsmConfig cfg,
                                               const SignalPreprocessing& prep) {
  if (signals.empty()) throw InputError("no signals to convert");
  const std::size_t batch = signals.size();
  Tensor<T> rsm({batch, 1, cfg.m, cfg.n});
  Tensor<T> egr({batch, 1, cfg.n, cfg.n});
  for (std::size_t i = 0; i < batch; ++i) {
    const Signal s = prep.normalize ? normalize_sample(signals[i], prep.normalization) : signals[i];
    const Rsm x = build_rsm(s, cfg);
    const Egr g = gram(x);
    std::copy(x.values.values().begin(), x.values.values().end(), rsm.plane(i, 0));
    std::copy(g.values.values().begin(), g.values.values().end(), egr.plane(i, 0));
  }
  return {std::move(rsm), std::move(egr)};
}

template <typename T>
std::vector<int> predict(const EgrNet<T>& model, const std::vector<Signal>& signals, RsmConfig cfg,
                         const SignalPreprocessing& prep, std::size_t batch_size) {
  std::vector<int> labels;
  labels.reserve(signals.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < signals.size(); start += batch_size) {
    const std::size_t end = std::min(signals.size(), start + batch_size);
    const std::vector<Signal> chunk(signals.begin() + static_cast<long>(start), signals.begin() + static_cast<long>(end));
    const auto [rsm, egr] = network_inputs<T>(chunk, cfg, prep);
    const auto out = model.infer(rsm, egr);
    for (int label : argmax_rows(out.probabilities)) labels.push_back(label);
  }
  return labels;
}

#define EGR_INSTANTIATE_NET(T)                                                                                   \
  template struct ConvBranch<T>;                                                                                 \
  template class GramConvBlock<T>;                                                                               \
  template class EgrNet<T>;                                                                                      \
  template std::vector<int> argmax_rows<T>(const Tensor<T>&);                                                    \
  template std::pair<Tensor<T>, Tensor<T>> network_inputs<T>(const std::vector<Signal>&, RsmConfig,              \
                                                             const SignalPreprocessing&);                        \
  template std::vector<int> predict<T>(const EgrNet<T>&, const std::vector<Signal>&, RsmConfig,                  \
                                       const SignalPreprocessing&, std::size_t);

EGR_INSTANTIATE_NET(float)
EGR_INSTANTIATE_NET(double)

}  // namespace egr
