#include <doctest.h>

#include <cmath>
#include <vector>

#include "egr/error.hpp"
#include "egr/gradcheck.hpp"
#include "egr/layers.hpp"
#include "egr/optim.hpp"
#include "egr/signal.hpp"

using namespace egr;

TEST_CASE("batch norm training output has zero mean and unit variance per channel") {
  Tensor<double> x({2, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 10, 10, 10, 14, 5, 6, 7, 8, -2, 0, 2, 4});
  BatchNorm2d<double> bn(make_batchnorm_state<double>(2));
  bn.state().epsilon = 0.0;
  const Tensor<double> y = bn.forward(x, true);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 4; ++i) {
        const double v = y.plane(n, c)[i];
        s += v;
        s2 += v * v;
      }
    CHECK(s / 8 == doctest::Approx(0.0).scale(1));
    CHECK(s2 / 8 == doctest::Approx(1.0));
  }
  // Channel 0 values 1..8: mean 4.5, running mean 0.9*0 + 0.1*4.5.
  CHECK(bn.state().running_mean[0] == doctest::Approx(0.45));
  // Population variance 5.25.
  CHECK(bn.state().running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 5.25));
}

TEST_CASE("batch norm inference uses running statistics") {
  BatchNorm2d<double> bn(make_batchnorm_state<double>(1));
  bn.state().running_mean[0] = 2.0;
  bn.state().running_var[0] = 4.0;
  bn.state().epsilon = 0.0;
  bn.state().gamma[0] = 3.0;
  bn.state().beta[0] = 1.0;
  const Tensor<double> y = bn.infer(Tensor<double>({1, 1, 1, 2}, std::vector<double>{4.0, 0.0}));
  CHECK(y[0] == doctest::Approx(4.0));
  CHECK(y[1] == doctest::Approx(-2.0));
}

TEST_CASE("plane layer norm normalizes each plane") {
  PlaneLayerNorm<double> ln(0.0);
  const Tensor<double> y = ln.forward(Tensor<double>({1, 2, 1, 2}, std::vector<double>{1, 3, -5, 5}));
  CHECK(y[0] == doctest::Approx(-1.0));
  CHECK(y[1] == doctest::Approx(1.0));
  CHECK(y[2] == doctest::Approx(-1.0));
  CHECK(y[3] == doctest::Approx(1.0));
}

TEST_CASE("relu, concat, split and pooling") {
  const Tensor<double> r = Relu<double>::infer(Tensor<double>({1, 1, 1, 3}, std::vector<double>{-1, 0, 2}));
  CHECK(r.values() == std::vector<double>{0, 0, 2});

  Tensor<double> a({1, 1, 1, 2}, std::vector<double>{1, 2});
  Tensor<double> b({1, 2, 1, 2}, std::vector<double>{3, 4, 5, 6});
  const Tensor<double> c = concat_channels(a, b);
  CHECK(c.shape() == Shape{1, 3, 1, 2});
  CHECK(c.values() == std::vector<double>{1, 2, 3, 4, 5, 6});
  const auto [a2, b2] = split_channels(c, 1);
  CHECK(a2.values() == a.values());
  CHECK(b2.values() == b.values());

  const Tensor<double> p = global_average_pool(b);
  CHECK(p.shape() == Shape{1, 2});
  CHECK(p[0] == doctest::Approx(3.5));
  CHECK(p[1] == doctest::Approx(5.5));
}

TEST_CASE("channel gram of a plane") {
  const Tensor<double> g = ChannelGram<double>::infer(Tensor<double>({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  CHECK(g.values() == std::vector<double>{10, 14, 14, 20});
  CHECK_THROWS_AS(ChannelGram<double>::infer(Tensor<double>({1, 1, 2, 3})), DimensionError);
}

TEST_CASE("dense layer computes x W^T + b") {
  Dense<double> d(2, 3);
  d.weights() = Tensor<double>({3, 2}, std::vector<double>{1, 0, 0, 1, 1, 1});
  d.bias() = Tensor<double>({3}, std::vector<double>{0.5, 0, -1});
  const Tensor<double> y = d.infer(Tensor<double>({1, 2}, std::vector<double>{2, 3}));
  CHECK(y.values() == std::vector<double>{2.5, 3, 4});
}

TEST_CASE("softmax cross entropy on a hand example") {
  const Tensor<double> logits({1, 2}, std::vector<double>{0.0, std::log(3.0)});
  const auto ce = softmax_cross_entropy(logits, one_hot<double>({1}, 2));
  CHECK(ce.probabilities[0] == doctest::Approx(0.25));
  CHECK(ce.probabilities[1] == doctest::Approx(0.75));
  CHECK(ce.loss == doctest::Approx(-std::log(0.75)));
  CHECK(ce.logit_grad[0] == doctest::Approx(0.25));
  CHECK(ce.logit_grad[1] == doctest::Approx(-0.25));
  // Large logits stay finite.
  const auto big = softmax_cross_entropy(Tensor<double>({1, 2}, std::vector<double>{1000.0, 0.0}), one_hot<double>({0}, 2));
  CHECK(std::isfinite(big.loss));
  CHECK_THROWS_AS(softmax_cross_entropy(logits, Tensor<double>({1, 2}, std::vector<double>{0.5, 0.5})), InputError);
}

TEST_CASE("one_hot rejects out-of-range labels") {
  CHECK(one_hot<double>({2, 0}, 3).values() == std::vector<double>{0, 0, 1, 1, 0, 0});
  CHECK_THROWS(one_hot<double>({3}, 3));
}

TEST_CASE("first Adam step moves each parameter by about lr against its gradient") {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 0.0};
  AdamState<double> s(3);
  adam_step<double>(p, g, s, 0.01);
  CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.99).epsilon(1e-6));
  CHECK(p[2] == 0.5);
  // Second step with the same gradient: m_hat = g and v_hat = g^2 again.
  adam_step<double>(p, g, s, 0.01);
  CHECK(p[0] == doctest::Approx(0.98).epsilon(1e-6));
}

TEST_CASE("stepped learning rate decays at the start of epochs 15, 30 and 45") {
  CHECK(stepped_learning_rate(1e-4, 0.1, 15, 0) == 1e-4);
  CHECK(stepped_learning_rate(1e-4, 0.1, 15, 14) == 1e-4);
  CHECK(stepped_learning_rate(1e-4, 0.1, 15, 15) == doctest::Approx(1e-5));
  CHECK(stepped_learning_rate(1e-4, 0.1, 15, 30) == doctest::Approx(1e-6));
  CHECK(stepped_learning_rate(1e-4, 0.1, 15, 49) == doctest::Approx(1e-7));
}

TEST_CASE("gradient check suites pass at layer and block scope") {
  GradcheckOptions opt;
  for (GradcheckScope scope : {GradcheckScope::layer, GradcheckScope::block}) {
    const GradcheckReport r = run_gradcheck_suites(scope, opt);
    CHECK(!r.entries.empty());
    for (const GradcheckEntry& e : r.entries) {
      INFO(e.suite << " / " << e.tensor << " " << e.max_rel_error);
      CHECK(e.passed());
    }
  }
}

TEST_CASE("gradient check catches a corrupted backward pass") {
  const GradcheckReport r = run_gradcheck_suites(GradcheckScope::layer, {}, true);
  CHECK_FALSE(r.passed());
}

TEST_CASE("gradient_check on a known function") {
  Tensor<double> w({3}, std::vector<double>{0.5, -1.0, 2.0});
  w.enable_grad();
  // loss = sum w^3, dloss/dw = 3 w^2.
  const auto loss = [&] {
    double s = 0.0;
    for (double v : w.values()) s += v * v * v;
    return s;
  };
  const auto grads = [&] {
    for (std::size_t i = 0; i < 3; ++i) w.grad()[i] = 3 * w[i] * w[i];
  };
  const auto ok = gradient_check("cube", {{"w", &w}}, loss, grads, {}, 1e-6);
  REQUIRE(ok.size() == 1);
  CHECK(ok[0].passed());
  const auto bad_grads = [&] {
    for (std::size_t i = 0; i < 3; ++i) w.grad()[i] = 2 * w[i] * w[i];
  };
  CHECK_FALSE(gradient_check("cube", {{"w", &w}}, loss, bad_grads, {}, 1e-6)[0].passed());
}

TEST_CASE("conv examples") {
  SUBCASE("ones kernel over a 3x3 ones input, valid") {
    ConvParams<double> p = make_conv_params<double>(1, 1, 3, 1, Padding::valid);
    p.kernels.fill(1.0);
    const Tensor<double> y = conv2d_forward(Tensor<double>({1, 1, 3, 3}, 1.0), p);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 9.0);
  }
  SUBCASE("identity kernel with same padding is exact") {
    ConvParams<double> p = make_conv_params<double>(2, 2, 3, 1);
    p.kernels.at(0, 0, 1, 1) = 1.0;
    p.kernels.at(1, 1, 1, 1) = 1.0;
    Rng rng(1);
    Tensor<double> x({2, 2, 6, 6});
    for (double& v : x.values()) v = rng.gaussian();
    CHECK(conv2d_forward(x, p).values() == x.values());
  }
  SUBCASE("zero upstream and bias gradient") {
    ConvParams<double> p = make_conv_params<double>(2, 3, 3, 2);
    Rng rng(2);
    he_init(p, rng);
    Tensor<double> x({2, 2, 8, 8});
    for (double& v : x.values()) v = rng.gaussian();
    const Tensor<double> y = conv2d_forward(x, p);
    CHECK(y.shape() == Shape{2, 3, 4, 4});
    const ConvGrads<double> zero = conv2d_backward(x, p, Tensor<double>(y.shape()));
    for (double v : zero.input.values()) CHECK(v == 0.0);
    for (double v : zero.kernels.values()) CHECK(v == 0.0);
    Tensor<double> up(y.shape());
    for (double& v : up.values()) v = rng.gaussian();
    const ConvGrads<double> g = conv2d_backward(x, p, up);
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 16; ++i) s += up.plane(n, c)[i];
      CHECK(g.bias[c] == doctest::Approx(s));
    }
  }
}

TEST_CASE("batch norm affine and layer norm edge cases") {
  BatchNorm2d<double> bn(make_batchnorm_state<double>(1));
  bn.state().gamma[0] = 2.0;
  bn.state().beta[0] = 3.0;
  const Tensor<double> x({1, 1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  const Tensor<double> y = bn.forward(x, true);
  BatchNorm2d<double> plain(make_batchnorm_state<double>(1));
  const Tensor<double> z = plain.forward(x, true);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(2.0 * z[i] + 3.0));
  // A constant channel in a batch of one is guarded by epsilon.
  BatchNorm2d<double> one(make_batchnorm_state<double>(1));
  const Tensor<double> c = one.forward(Tensor<double>({1, 1, 2, 2}, 5.0), true);
  CHECK(c.all_finite());

  PlaneLayerNorm<double> ln;
  const Tensor<double> flat = ln.forward(Tensor<double>({1, 1, 2, 2}, 7.0));
  for (double v : flat.values()) CHECK(v == 0.0);
  const Tensor<double> two = PlaneLayerNorm<double>(0.0).infer(Tensor<double>({1, 1, 1, 2}, std::vector<double>{1, 3}));
  CHECK(two[0] == doctest::Approx(-1.0));
  CHECK(two[1] == doctest::Approx(1.0));
}

TEST_CASE("relu gradient mask follows the sign pattern") {
  Relu<double> r;
  r.forward(Tensor<double>({1, 1, 1, 4}, std::vector<double>{-1, 0, 2, 3}));
  const Tensor<double> g = r.backward(Tensor<double>({1, 1, 1, 4}, std::vector<double>{5, 5, 5, 5}));
  CHECK(g.values() == std::vector<double>{0, 0, 5, 5});
}

TEST_CASE("channel gram agrees with the signal-level Gram per channel and is PSD") {
  Rng rng(6);
  Tensor<double> x({2, 3, 5, 5});
  for (double& v : x.values()) v = rng.gaussian();
  const Tensor<double> g = ChannelGram<double>::infer(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      const Egr ref = gram(Rsm{Matrix(5, 5, std::vector<double>(x.plane(n, c), x.plane(n, c) + 25))});
      for (std::size_t i = 0; i < 25; ++i) CHECK(g.plane(n, c)[i] == doctest::Approx(ref.values.values()[i]).epsilon(1e-12));
      for (int q = 0; q < 10; ++q) {
        std::vector<double> v(5);
        for (double& e : v) e = rng.gaussian();
        double quad = 0.0;
        for (std::size_t i = 0; i < 5; ++i)
          for (std::size_t j = 0; j < 5; ++j) quad += v[i] * g.plane(n, c)[i * 5 + j] * v[j];
        CHECK(quad >= -1e-9);
      }
    }
  const Tensor<double> id = ChannelGram<double>::infer(Tensor<double>({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1}));
  CHECK(id.values() == std::vector<double>{1, 0, 0, 1});
}

TEST_CASE("concat backward splits the upstream gradient exactly") {
  const Tensor<double> up({2, 5, 2, 2}, 0.0);
  Tensor<double> u = up;
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = static_cast<double>(i);
  const auto [ga, gb] = split_channels(u, 2);
  CHECK(ga.shape() == Shape{2, 2, 2, 2});
  CHECK(gb.shape() == Shape{2, 3, 2, 2});
  CHECK(concat_channels(ga, gb).values() == u.values());
  CHECK_THROWS_AS(concat_channels(Tensor<double>({1, 1, 2, 2}), Tensor<double>({1, 1, 3, 3})), DimensionError);
}

TEST_CASE("pooling examples") {
  CHECK(global_average_pool(Tensor<double>({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}))[0] == 2.5);
  CHECK(global_average_pool(Tensor<double>({1, 1, 3, 3}, 4.0))[0] == doctest::Approx(4.0));
  const Tensor<double> g = global_average_pool_backward(Tensor<double>({1, 1}, std::vector<double>{8.0}), 2, 2);
  CHECK(g.values() == std::vector<double>{2, 2, 2, 2});
}

TEST_CASE("dense with identity weights passes input through") {
  Dense<double> d(3, 3);
  d.weights() = Tensor<double>({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor<double> x({2, 3}, std::vector<double>{1, -2, 3, 4, 5, -6});
  CHECK(d.infer(x).values() == x.values());
}

TEST_CASE("softmax properties") {
  const auto uniform = softmax_cross_entropy(Tensor<double>({2, 5}, 0.3), one_hot<double>({1, 4}, 5));
  CHECK(uniform.loss == doctest::Approx(std::log(5.0)));
  const auto saturated = softmax_cross_entropy(Tensor<double>({1, 2}, std::vector<double>{20, -20}), one_hot<double>({0}, 2));
  CHECK(saturated.loss < 1e-15);

  Rng rng(5);
  Tensor<double> logits({4, 6});
  for (double& v : logits.values()) v = 5.0 * rng.gaussian();
  Tensor<double> shifted = logits;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 6; ++c) shifted[r * 6 + c] += 100.0 * r - 7.0;
  const auto targets = one_hot<double>({0, 5, 2, 3}, 6);
  const auto a = softmax_cross_entropy(logits, targets);
  const auto b = softmax_cross_entropy(shifted, targets);
  CHECK(std::abs(a.loss - b.loss) <= 1e-12);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 6; ++c) s += a.probabilities[r * 6 + c];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("Adam matches a hand-rolled trace") {
  std::vector<double> p{0.5, -0.25};
  AdamState<double> s(2);
  const std::vector<double> zero{0.0, 0.0};
  adam_step<double>(p, zero, s, 0.1);
  CHECK(p == std::vector<double>{0.5, -0.25});
  CHECK(s.step_count == 1);

  // Independent trace of two steps with g = (0.2, -0.6), lr 0.01, from fresh state.
  std::vector<double> q{0.5, -0.25};
  AdamState<double> t(2);
  const std::vector<double> g{0.2, -0.6};
  std::vector<double> expect = q;
  double m[2] = {0, 0}, v[2] = {0, 0};
  for (int step = 1; step <= 2; ++step) {
    adam_step<double>(q, g, t, 0.01);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double vh = v[i] / (1 - std::pow(0.999, step));
      expect[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(std::abs(q[0] - expect[0]) <= 1e-12);
  CHECK(std::abs(q[1] - expect[1]) <= 1e-12);

  // Identical inputs give bit-identical updates.
  std::vector<double> r{0.5, -0.25};
  AdamState<double> u(2);
  adam_step<double>(r, g, u, 0.01);
  adam_step<double>(r, g, u, 0.01);
  CHECK(r == q);
}
