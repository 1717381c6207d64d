#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include "egr/error.hpp"
#include "egr/rng.hpp"
#include "egr/signal.hpp"

using namespace egr;

namespace {

std::vector<double> ramp(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
  return v;
}

std::vector<double> sine(std::size_t n, double period, double phase = 0.0) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / period + phase);
  return v;
}

// Sum over rows, written independently of the library kernels.
double naive_gram_entry(const Matrix& x, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) s += x(r, a) * x(r, b);
  return s;
}

}  // namespace

TEST_CASE("RSM entry (i, j) is sample i*n + j") {
  const Rsm x = build_rsm(Signal(ramp(12), 1.0), {3, 4});
  REQUIRE(x.values.rows() == 3);
  REQUIRE(x.values.cols() == 4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(x.values(i, j) == static_cast<double>(i * 4 + j));
  // Column j is the state vector [x(j), x(n+j), x(2n+j)].
  CHECK(x.values(0, 1) == 1.0);
  CHECK(x.values(1, 1) == 5.0);
  CHECK(x.values(2, 1) == 9.0);
}

TEST_CASE("build_rsm rejects a length that is not m*n") {
  CHECK_THROWS_AS(build_rsm(Signal(ramp(10), 1.0), {3, 4}), DimensionError);
  CHECK_THROWS_AS(build_rsm(Signal(ramp(12), 1.0), {0, 12}), DimensionError);
}

TEST_CASE("Signal rejects empty, non-finite and bad rates") {
  CHECK_THROWS_AS(Signal({}, 1.0), InputError);
  CHECK_THROWS_AS(Signal({1.0, std::nan("")}, 1.0), InputError);
  CHECK_THROWS_AS(Signal({1.0, INFINITY}, 1.0), InputError);
  CHECK_THROWS_AS(Signal({1.0}, 0.0), InputError);
}

TEST_CASE("Gram of the RSM matches a naive sum of column products") {
  Rng rng(11);
  std::vector<double> v(8 * 6);
  for (double& e : v) e = rng.gaussian();
  const Rsm x = build_rsm(v, {8, 6});
  const Egr g = gram(x);
  REQUIRE(g.values.rows() == 6);
  REQUIRE(g.values.cols() == 6);
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) CHECK(g.values(a, b) == doctest::Approx(naive_gram_entry(x.values, a, b)).epsilon(1e-12));
}

TEST_CASE("hand-computed 2x2 EGR") {
  // Samples 1 2 3 4 -> X = [[1,2],[3,4]], X^T X = [[10,14],[14,20]].
  const Egr g = egr_of_signal(Signal({1, 2, 3, 4}, 1.0), {2, 2});
  CHECK(g.values(0, 0) == 10.0);
  CHECK(g.values(0, 1) == 14.0);
  CHECK(g.values(1, 0) == 14.0);
  CHECK(g.values(1, 1) == 20.0);
}

TEST_CASE("property: EGR symmetric, PSD and scales by alpha^2") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng.below(10);
    const std::size_t n = 2 + rng.below(10);
    std::vector<double> v(m * n);
    for (double& e : v) e = rng.gaussian();
    const Egr g = gram(build_rsm(v, {m, n}));
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) CHECK(g.values(a, b) == g.values(b, a));
    for (int q = 0; q < 20; ++q) {
      std::vector<double> z(n);
      for (double& e : z) e = rng.gaussian();
      double quad = 0.0;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) quad += z[a] * g.values(a, b) * z[b];
      CHECK(quad >= -1e-10 * g.values.max_abs() * n);
    }
    const double alpha = rng.uniform(-3.0, 3.0);
    std::vector<double> scaled = v;
    for (double& e : scaled) e *= alpha;
    const Egr gs = gram(build_rsm(scaled, {m, n}));
    for (std::size_t i = 0; i < n * n; ++i) {
      CHECK(gs.values.values()[i] == doctest::Approx(alpha * alpha * g.values.values()[i]).epsilon(1e-12).scale(g.values.max_abs()));
    }
  }
}

TEST_CASE("stripe profile of a sine peaks at its period") {
  SUBCASE("T = 8 on 64x64") {
    const Egr g = egr_of_signal(Signal(sine(4096, 8.0, 0.3), 1.0), {64, 64});
    CHECK(stripe_profile(g).dominant_lag(1, 32) == 8);
  }
  SUBCASE("T = 16 on 32x32") {
    const Egr g = egr_of_signal(Signal(sine(1024, 16.0), 1.0), {32, 32});
    CHECK(stripe_profile(g).dominant_lag(1, 16) == 16);
  }
  SUBCASE("lag means are diagonal averages") {
    const Egr g = egr_of_signal(Signal({1, 2, 3, 4, 5, 6, 7, 8, 9}, 1.0), {3, 3});
    const StripeProfile p = stripe_profile(g);
    REQUIRE(p.lag_means.size() == 3);
    CHECK(p.lag_means[2] == doctest::Approx(g.values(0, 2)));
    CHECK(p.lag_means[1] == doctest::Approx((g.values(0, 1) + g.values(1, 2)) / 2.0));
  }
}

TEST_CASE("dominant_lag resolves near-ties to the smallest lag") {
  StripeProfile p;
  p.lag_means = {5.0, 1.0, 3.0, 3.0 * (1 + 1e-12), 2.0};
  CHECK(p.dominant_lag(1, 4) == 2);
  p.lag_means = {5.0, 1.0, 3.0, 3.1, 2.0};
  CHECK(p.dominant_lag(1, 4) == 3);
}

TEST_CASE("normalize_sample centres and divides by the variance") {
  const Signal s({1.0, 3.0, 5.0, 7.0}, 100.0, 2);
  // mean 4, population variance 5.
  const Signal v = normalize_sample(s, NormalizationMode::variance);
  CHECK(v.samples()[0] == doctest::Approx(-3.0 / 5.0));
  CHECK(v.samples()[3] == doctest::Approx(3.0 / 5.0));
  CHECK(v.label() == 2);
  CHECK(v.sample_rate_hz() == 100.0);
  const Signal d = normalize_sample(s, NormalizationMode::standard_deviation);
  CHECK(d.samples()[0] == doctest::Approx(-3.0 / std::sqrt(5.0)));
  CHECK_THROWS_AS(normalize_sample(Signal({2.0, 2.0, 2.0}, 1.0)), DegenerateSignalError);
}

TEST_CASE("add_noise_snr realizes the target SNR and is seeded") {
  const Signal s(sine(4096, 37.0), 1000.0);
  const double ps = signal_power(s.samples());
  for (double snr : {-6.0, 0.0, 10.0}) {
    double noise_power = 0.0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
      const Signal y = add_noise_snr(s, {snr, static_cast<std::uint64_t>(t)});
      double e = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) e += std::pow(y.samples()[i] - s.samples()[i], 2);
      noise_power += e / static_cast<double>(s.size());
    }
    noise_power /= trials;
    CHECK(std::abs(10.0 * std::log10(ps / noise_power) - snr) < 0.1);
  }
  const Signal a = add_noise_snr(s, {0.0, 5});
  const Signal b = add_noise_snr(s, {0.0, 5});
  const Signal c = add_noise_snr(s, {0.0, 6});
  CHECK(std::equal(a.samples().begin(), a.samples().end(), b.samples().begin()));
  CHECK_FALSE(std::equal(a.samples().begin(), a.samples().end(), c.samples().begin()));
  CHECK_THROWS_AS(add_noise_snr(Signal({0.0, 0.0}, 1.0), {0.0, 1}), DegenerateSignalError);
}

TEST_CASE("suggest_dims takes the square root") {
  CHECK(suggest_dims(4096).m == 64);
  CHECK(suggest_dims(4096).n == 64);
  CHECK(suggest_dims(64).n == 8);
  CHECK_THROWS_AS(suggest_dims(4095), DimensionError);
}

TEST_CASE("signal_power is the mean square") {
  const std::vector<double> v{1.0, -2.0, 2.0};
  CHECK(signal_power(v) == doctest::Approx(3.0));
}

TEST_CASE("RSM of 0..4095 at 64x64: row 10, column 5 holds 645") {
  const Rsm x = build_rsm(Signal(ramp(4096), 1.0), {64, 64});
  CHECK(x.values(10, 5) == 645.0);
  // Independent reshape oracle: walk the samples in row-major order.
  std::size_t k = 0;
  bool ok = true;
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t j = 0; j < 64; ++j) ok = ok && x.values(i, j) == static_cast<double>(k++);
  CHECK(ok);
  const Rsm r = build_rsm(Signal({1, 2, 3, 4, 5, 6}, 1.0), {2, 3});
  CHECK(r.values.values()[3] == 4.0);
}

TEST_CASE("Gram special cases") {
  const Egr id = gram(Rsm{Matrix(2, 2, std::vector<double>{1, 0, 0, 1})});
  CHECK(id.values(0, 0) == 1.0);
  CHECK(id.values(0, 1) == 0.0);
  CHECK(id.values(1, 1) == 1.0);

  // Duplicated columns 0 and 2: equal rows and columns, zero determinant.
  const Egr dup = gram(Rsm{Matrix(3, 3, std::vector<double>{1, 2, 1, 3, -1, 3, 0, 5, 0})});
  for (std::size_t k = 0; k < 3; ++k) CHECK(dup.values(0, k) == dup.values(2, k));
  const Matrix& g = dup.values;
  const double det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0)) +
                     g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
  CHECK(std::abs(det) < 1e-9);

  const Egr c = egr_of_signal(Signal(std::vector<double>(16, 1.5), 1.0), {4, 4});
  for (double v : c.values.values()) CHECK(v == doctest::Approx(4 * 1.5 * 1.5));
  const Egr z = egr_of_signal(Signal(std::vector<double>(16, 0.0), 1.0), {4, 4});
  for (double v : z.values.values()) CHECK(v == 0.0);
}

TEST_CASE("stripe profiles of identity and all-ones matrices") {
  const StripeProfile id = stripe_profile(Egr{Matrix(4, 4, std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1})});
  CHECK(id.lag_means == std::vector<double>{1, 0, 0, 0});
  const StripeProfile ones = stripe_profile(Egr{Matrix(3, 3, 1.0)});
  CHECK(ones.lag_means == std::vector<double>{1, 1, 1});
}

TEST_CASE("property: periodic signals give periodic state vectors") {
  for (std::size_t T : {2u, 4u, 8u, 16u}) {
    const Rsm x = build_rsm(Signal(sine(4096, static_cast<double>(T), 0.7), 1.0), {64, 64});
    double worst = 0.0;
    for (std::size_t j = 0; j + T < 64; ++j)
      for (std::size_t r = 0; r < 64; ++r) worst = std::max(worst, std::abs(x.values(r, j) - x.values(r, j + T)));
    CHECK(worst <= 1e-12);
    CHECK(stripe_profile(gram(x)).dominant_lag(1, 32) == T);
  }
}

TEST_CASE("normalize_sample examples") {
  const Signal a = normalize_sample(Signal({1.0, 3.0}, 1.0));
  CHECK(a.samples()[0] == doctest::Approx(-1.0));
  CHECK(a.samples()[1] == doctest::Approx(1.0));
  // A zero-mean unit-variance signal is unchanged.
  const Signal u = normalize_sample(Signal({1.0, -1.0, 1.0, -1.0}, 1.0));
  CHECK(u.samples()[0] == doctest::Approx(1.0));
  CHECK(u.samples()[1] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(normalize_sample(Signal({4.0}, 1.0)), DegenerateSignalError);
  // Mean-zero property on random input.
  Rng rng(3);
  std::vector<double> v(1000);
  for (double& e : v) e = 5.0 + 3.0 * rng.gaussian();
  const Signal n = normalize_sample(Signal(v, 1.0));
  double mean = 0.0;
  for (double e : n.samples()) mean += e;
  CHECK(std::abs(mean / 1000.0) <= 1e-9 * 20.0);
}

TEST_CASE("noise power for a unit-power signal follows 10^(-snr/10)") {
  std::vector<double> v(4096);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 2) ? 1.0 : -1.0;  // power exactly 1
  const Signal s(v, 1.0);
  for (double snr : {0.0, -6.0}) {
    double p = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Signal y = add_noise_snr(s, {snr, seed});
      for (std::size_t i = 0; i < v.size(); ++i) p += std::pow(y.samples()[i] - v[i], 2);
    }
    p /= 50.0 * 4096.0;
    CHECK(p == doctest::Approx(std::pow(10.0, -snr / 10.0)).epsilon(0.01));
  }
}

TEST_CASE("Gram cost grows as n^2 m") {
  const auto time_gram = [](std::size_t n) {
    Rng rng(n);
    std::vector<double> v(n * n);
    for (double& e : v) e = rng.gaussian();
    const Rsm x = build_rsm(v, {n, n});
    std::vector<double> t;
    for (int rep = 0; rep < 9; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const Egr g = gram(x);
      t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      CHECK(g.values.rows() == n);
    }
    // Fastest run: least disturbed by other load on the machine.
    return *std::min_element(t.begin(), t.end());
  };
  const double ratio = time_gram(512) / time_gram(256);
  INFO("time ratio " << ratio);
  CHECK(ratio >= 4.0);
  CHECK(ratio <= 16.0);
}
