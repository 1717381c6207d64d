#include "egr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egr/error.hpp"
#include "egr/kernels/gram.hpp"
#include "egr/rng.hpp"

namespace egr {

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradcheckEntry& e) { return e.passed(); });
}

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const GradcheckEntry& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

GradcheckScope parse_gradcheck_scope(const std::string& name) {
  if (name == "layer") return GradcheckScope::layer;
  if (name == "block") return GradcheckScope::block;
  if (name == "net") return GradcheckScope::net;
  if (name == "all") return GradcheckScope::all;
  throw ConfigError("unknown gradcheck scope '" + name + "' (expected layer, block, net or all)");
}

std::vector<GradcheckEntry> gradient_check(const std::string& suite, const std::vector<NamedTensor<double>>& tensors,
                                           const std::function<double()>& loss,
                                           const std::function<void()>& gradients, const GradcheckOptions& options,
                                           double tolerance) {
  for (const NamedTensor<double>& t : tensors) {
    if (!t.tensor->has_grad()) throw Error("gradient_check: tensor '" + t.name + "' has no grad buffer");
  }
  gradients();
  // copy: later loss() calls may run backward-free forwards only, but keep
  // the analytic values independent of anything the callbacks do
  std::vector<std::vector<double>> analytic;
  for (const NamedTensor<double>& t : tensors) analytic.emplace_back(t.tensor->grad().begin(), t.tensor->grad().end());

  const auto rms_of = [](const std::vector<double>& g) {
    double ss = 0.0;
    for (double v : g) ss += v * v;
    return std::sqrt(ss / static_cast<double>(g.size()));
  };
  double suite_ss = 0.0;
  std::size_t suite_n = 0;
  for (const auto& g : analytic) {
    for (double v : g) suite_ss += v * v;
    suite_n += g.size();
  }
  const double suite_rms = std::sqrt(suite_ss / static_cast<double>(std::max<std::size_t>(suite_n, 1)));

  Rng rng(derive_seed(options.seed, {std::hash<std::string>{}(suite)}));
  std::vector<GradcheckEntry> entries;
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Tensor<double>& t = *tensors[ti].tensor;
    const std::vector<double>& a = analytic[ti];
    const double floor = std::max(1e-12, 1e-3 * std::max(rms_of(a), suite_rms));

    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.samples_per_tensor) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(options.samples_per_tensor);
    }
    GradcheckEntry e{suite, tensors[ti].name, coords.size(), 0.0, tolerance};
    for (std::size_t idx : coords) {
      const double original = t[idx];
      double best = std::numeric_limits<double>::infinity();
      for (double h = options.step; h >= options.step * 1e-2 * 0.99; h /= 10.0) {
        t[idx] = original + h;
        const double up = loss();
        t[idx] = original - h;
        const double down = loss();
        t[idx] = original;
        const double numeric = (up - down) / (2.0 * h);
        const double err = std::abs(a[idx] - numeric) / std::max({std::abs(a[idx]), std::abs(numeric), floor});
        best = std::min(best, err);
        if (best <= tolerance) break;
      }
      e.max_rel_error = std::max(e.max_rel_error, best);
    }
    entries.push_back(e);
  }
  return entries;
}

namespace {

using Td = Tensor<double>;

Td random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Td t(std::move(shape));
  for (double& v : t.values()) v = scale * rng.gaussian();
  t.enable_grad();
  return t;
}

double weighted_sum(const Td& y, const Td& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
  return s;
}

void set_grad(Td& t, const Td& g) {
  std::copy(g.values().begin(), g.values().end(), t.grad().begin());
}

void zero_grads(const std::vector<NamedTensor<double>>& tensors) {
  for (const auto& t : tensors) t.tensor->zero_grad();
}

class Suites {
 public:
  Suites(const GradcheckOptions& o, GradcheckReport& r) : opt_(o), report_(r), rng_(derive_seed(o.seed, {0x6763ULL})) {}

  void add(const std::string& suite, const std::vector<NamedTensor<double>>& tensors,
           const std::function<double()>& loss, const std::function<void()>& gradients, bool linear = false) {
    auto entries = gradient_check(suite, tensors, loss, gradients, opt_, linear ? opt_.linear_tolerance : opt_.tolerance);
    report_.entries.insert(report_.entries.end(), entries.begin(), entries.end());
  }

  void layers() {
    {
      Dense<double> dense(5, 3);
      dense.init(rng_);
      Td x = random_tensor({4, 5}, rng_);
      const Td r = random_tensor({4, 3}, rng_);
      const std::vector<NamedTensor<double>> ts{{"input", &x}, {"weights", &dense.weights()}, {"bias", &dense.bias()}};
      add("dense", ts, [&] { return weighted_sum(dense.infer(x), r); },
          [&] {
            zero_grads(ts);
            dense.forward(x);
            set_grad(x, dense.backward(r));
          },
          true);
    }
    const auto conv_suite = [&](const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                                std::size_t stride, Padding padding, std::size_t side) {
      Conv2d<double> conv(make_conv_params<double>(cin, cout, k, stride, padding));
      he_init(conv.params(), rng_);
      for (double& b : conv.params().bias.values()) b = 0.1 * rng_.gaussian();
      Td x = random_tensor({2, cin, side, side}, rng_);
      const Td r = random_tensor(conv.infer(x).shape(), rng_);
      const std::vector<NamedTensor<double>> ts{
          {"input", &x}, {"kernels", &conv.params().kernels}, {"bias", &conv.params().bias}};
      add(name, ts, [&] { return weighted_sum(conv.infer(x), r); },
          [&] {
            zero_grads(ts);
            conv.forward(x);
            set_grad(x, conv.backward(r, true));
          },
          true);
    };
    conv_suite("conv2d same k3 s1", 3, 4, 3, 1, Padding::same, 6);
    conv_suite("conv2d same k5 s2", 2, 3, 5, 2, Padding::same, 7);
    conv_suite("conv2d valid k3 s2", 2, 2, 3, 2, Padding::valid, 7);
    {
      BatchNorm2d<double> bn(make_batchnorm_state<double>(3));
      for (double& g : bn.state().gamma.values()) g = 1.0 + 0.3 * rng_.gaussian();
      for (double& b : bn.state().beta.values()) b = 0.3 * rng_.gaussian();
      Td x = random_tensor({3, 3, 4, 4}, rng_, 2.0);
      const Td r = random_tensor(x.shape(), rng_);
      const std::vector<NamedTensor<double>> ts{{"input", &x}, {"gamma", &bn.state().gamma}, {"beta", &bn.state().beta}};
      add("batchnorm (training)", ts, [&] { return weighted_sum(bn.forward(x, true), r); },
          [&] {
            zero_grads(ts);
            bn.forward(x, true);
            set_grad(x, bn.backward(r));
          });
    }
    {
      PlaneLayerNorm<double> ln;
      Td x = random_tensor({2, 3, 4, 4}, rng_, 3.0);
      const Td r = random_tensor(x.shape(), rng_);
      const std::vector<NamedTensor<double>> ts{{"input", &x}};
      add("layernorm", ts, [&] { return weighted_sum(ln.infer(x), r); },
          [&] {
            ln.forward(x);
            set_grad(x, ln.backward(r));
          });
    }
    {
      Relu<double> relu;
      Td x = random_tensor({2, 2, 4, 4}, rng_);
      for (double& v : x.values()) v += v >= 0 ? 0.1 : -0.1;  // keep away from the kink
      const Td r = random_tensor(x.shape(), rng_);
      const std::vector<NamedTensor<double>> ts{{"input", &x}};
      add("relu", ts, [&] { return weighted_sum(Relu<double>::infer(x), r); },
          [&] {
            relu.forward(x);
            set_grad(x, relu.backward(r));
          },
          true);
    }
    {
      ChannelGram<double> gram;
      Td x = random_tensor({2, 2, 5, 5}, rng_);
      const Td r = random_tensor(x.shape(), rng_);
      const std::vector<NamedTensor<double>> ts{{"input", &x}};
      add("channel_gram", ts, [&] { return weighted_sum(ChannelGram<double>::infer(x), r); },
          [&] {
            gram.forward(x);
            set_grad(x, gram.backward(r));
          });
    }
    {
      Td a = random_tensor({2, 2, 3, 3}, rng_);
      Td b = random_tensor({2, 3, 3, 3}, rng_);
      const Td r = random_tensor({2, 5, 3, 3}, rng_);
      const std::vector<NamedTensor<double>> ts{{"a", &a}, {"b", &b}};
      add("concat_channels", ts, [&] { return weighted_sum(concat_channels(a, b), r); },
          [&] {
            auto [ga, gb] = split_channels(r, 2);
            set_grad(a, ga);
            set_grad(b, gb);
          },
          true);
    }
    {
      Td x = random_tensor({2, 3, 4, 4}, rng_);
      const Td r = random_tensor({2, 3}, rng_);
      const std::vector<NamedTensor<double>> ts{{"input", &x}};
      add("global_average_pool", ts, [&] { return weighted_sum(global_average_pool(x), r); },
          [&] { set_grad(x, global_average_pool_backward(r, 4, 4)); }, true);
    }
    {
      Td logits = random_tensor({4, 3}, rng_, 2.0);
      const Td targets = one_hot<double>({0, 2, 1, 2}, 3);
      const std::vector<NamedTensor<double>> ts{{"logits", &logits}};
      add("softmax_cross_entropy", ts, [&] { return softmax_cross_entropy(logits, targets).loss; },
          [&] { set_grad(logits, softmax_cross_entropy(logits, targets).logit_grad); });
      report_.entries.back().tolerance = std::min(report_.entries.back().tolerance, 1e-5);
    }
  }

  void blocks() {
    for (NetworkVariant v : {NetworkVariant::egr_net, NetworkVariant::egr_net_no_bc, NetworkVariant::cnn_rsm}) {
      for (const GcbSpec& spec : {GcbSpec{3, 3, 1}, GcbSpec{3, 3, 2}}) {
        const bool two = v != NetworkVariant::cnn_rsm;
        const std::size_t egr_in = two ? 2 : 1;
        GramConvBlock<double> block(spec, 2, egr_in, v);
        he_init(block.rsm_branch().conv.params(), rng_);
        if (two) he_init(block.egr_branch().conv.params(), rng_);
        std::vector<NamedTensor<double>> ts;
        Td x = random_tensor({3, 2, 6, 6}, rng_);
        Td g = random_tensor({3, egr_in, 6, 6}, rng_);
        ts.push_back({"x", &x});
        if (two) ts.push_back({"g", &g});
        const auto add_branch = [&](const std::string& prefix, ConvBranch<double>& br) {
          for (double& b : br.conv.params().bias.values()) b = 0.1 * rng_.gaussian();
          for (double& gm : br.bn.state().gamma.values()) gm = 1.0 + 0.2 * rng_.gaussian();
          for (double& bt : br.bn.state().beta.values()) bt = 0.2 * rng_.gaussian();
          ts.push_back({prefix + ".conv.kernels", &br.conv.params().kernels});
          ts.push_back({prefix + ".conv.bias", &br.conv.params().bias});
          ts.push_back({prefix + ".bn.gamma", &br.bn.state().gamma});
          ts.push_back({prefix + ".bn.beta", &br.bn.state().beta});
        };
        add_branch("rsm", block.rsm_branch());
        if (two) add_branch("egr", block.egr_branch());
        const BlockOutput<double> probe = block.forward(x, g, true);
        const Td rx = random_tensor(probe.x.shape(), rng_);
        const Td rg = two ? random_tensor(probe.g.shape(), rng_) : Td();
        const auto loss = [&] {
          const BlockOutput<double> out = block.forward(x, g, true);
          return weighted_sum(out.x, rx) + (two ? weighted_sum(out.g, rg) : 0.0);
        };
        const std::string name = "gcb " + to_string(v) + " k" + std::to_string(spec.kernel_size) + " s" +
                                 std::to_string(spec.stride);
        add(name, ts, loss, [&] {
          zero_grads(ts);
          block.forward(x, g, true);
          const BlockOutput<double> grads = block.backward(rx, rg, true);
          set_grad(x, grads.x);
          if (two) set_grad(g, grads.g);
        });
      }
    }
  }

  void nets() {
    for (NetworkVariant v : {NetworkVariant::egr_net, NetworkVariant::egr_net_no_bc, NetworkVariant::cnn_rsm}) {
      NetworkConfig cfg;
      cfg.variant = v;
      cfg.num_classes = 3;
      cfg.input_side = 8;
      cfg.blocks = {{3, 4, 1}, {3, 4, 2}};
      EgrNet<double> net(cfg);
      net.initialize(derive_seed(opt_.seed, {static_cast<std::uint64_t>(v)}));
      std::vector<NamedTensor<double>> ts = net.parameters();
      for (auto& p : ts) {
        // move BN affine and biases off their init values so every path is exercised
        if (p.name.ends_with(".bias") || p.name.ends_with(".beta")) {
          for (double& b : p.tensor->values()) b = 0.1 * rng_.gaussian();
        } else if (p.name.ends_with(".gamma")) {
          for (double& gm : p.tensor->values()) gm = 1.0 + 0.2 * rng_.gaussian();
        }
      }
      const bool two = v != NetworkVariant::cnn_rsm;
      Td rsm = random_tensor({4, 1, 8, 8}, rng_);
      Td egr = random_tensor({4, 1, 8, 8}, rng_);
      ts.insert(ts.begin(), {"input.rsm", &rsm});
      if (two) ts.insert(ts.begin() + 1, {"input.egr", &egr});
      const Td targets = one_hot<double>({0, 1, 2, 1}, 3);
      const auto loss = [&] { return softmax_cross_entropy(net.forward(rsm, egr, true).logits, targets).loss; };
      add("net " + to_string(v) + " 8x8 two blocks", ts, loss, [&] {
        zero_grads(ts);
        const auto out = net.forward(rsm, egr, true);
        const auto ce = softmax_cross_entropy(out.logits, targets);
        const BlockOutput<double> grads = net.backward(ce.logit_grad, true);
        set_grad(rsm, grads.x);
        if (two) set_grad(egr, grads.g);
      });
    }
  }

  // Gram backward written as P U instead of P (U + U^T).
  void corrupted() {
    Td x = random_tensor({2, 2, 5, 5}, rng_);
    const Td r = random_tensor(x.shape(), rng_);
    const std::vector<NamedTensor<double>> ts{{"input", &x}};
    add("channel_gram (corrupted backward)", ts, [&] { return weighted_sum(ChannelGram<double>::infer(x), r); }, [&] {
      Td g(x.shape());
      const std::size_t s = x.dim(2);
      for (std::size_t p = 0; p < x.dim(0) * x.dim(1); ++p) {
        const double* P = x.raw() + p * s * s;
        const double* U = r.raw() + p * s * s;
        double* out = g.raw() + p * s * s;
        for (std::size_t i = 0; i < s; ++i) {
          for (std::size_t j = 0; j < s; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < s; ++k) acc += P[i * s + k] * U[k * s + j];
            out[i * s + j] = acc;
          }
        }
      }
      set_grad(x, g);
    });
  }

 private:
  GradcheckOptions opt_;
  GradcheckReport& report_;
  Rng rng_;
};

}  // namespace

GradcheckReport run_gradcheck_suites(GradcheckScope scope, const GradcheckOptions& options, bool corrupt) {
  GradcheckReport report;
  Suites suites(options, report);
  if (scope == GradcheckScope::layer || scope == GradcheckScope::all) suites.layers();
  if (scope == GradcheckScope::block || scope == GradcheckScope::all) suites.blocks();
  if (scope == GradcheckScope::net || scope == GradcheckScope::all) suites.nets();
  if (corrupt) suites.corrupted();
  return report;
}

}  // namespace egr
