#include "egr/signal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "egr/error.hpp"
#include "egr/kernels/gram.hpp"
#include "egr/rng.hpp"

namespace egr {

Signal::Signal(std::vector<double> samples, double sample_rate_hz, std::optional<int> label)
    : samples_(std::move(samples)), sample_rate_hz_(sample_rate_hz), label_(label) {
  if (samples_.empty()) throw InputError("signal has no samples");
  if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) {
    throw InputError("sample rate must be positive, got " + std::to_string(sample_rate_hz_));
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!std::isfinite(samples_[i])) throw NonFiniteError("signal sample " + std::to_string(i) + " is not finite");
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw DimensionError("matrix of " + std::to_string(rows) + "x" + std::to_string(cols) + " needs " +
                         std::to_string(rows * cols) + " values, got " + std::to_string(values_.size()));
  }
}

double Matrix::max_abs() const {
  double best = 0.0;
  for (double v : values_) best = std::max(best, std::abs(v));
  return best;
}

std::size_t StripeProfile::dominant_lag(std::size_t first, std::size_t last) const {
  if (lag_means.empty()) throw InputError("empty stripe profile");
  last = std::min(last, lag_means.size() - 1);
  if (first > last) throw InputError("empty lag range");
  double best = lag_means[first];
  double scale = 0.0;
  for (std::size_t k = first; k <= last; ++k) {
    best = std::max(best, lag_means[k]);
    scale = std::max(scale, std::abs(lag_means[k]));
  }
  const double tie = 1e-9 * scale;
  for (std::size_t k = first; k <= last; ++k) {
    if (lag_means[k] >= best - tie) return k;
  }
  return first;
}

Rsm build_rsm(std::span<const double> samples, RsmConfig cfg) {
  if (cfg.m == 0 || cfg.n == 0) throw DimensionError("RSM dimensions must be positive");
  if (samples.size() != cfg.m * cfg.n) {
    throw DimensionError("RSM " + std::to_string(cfg.m) + "x" + std::to_string(cfg.n) + " expects " +
                         std::to_string(cfg.m * cfg.n) + " samples, got " + std::to_string(samples.size()));
  }
  return Rsm{Matrix(cfg.m, cfg.n, std::vector<double>(samples.begin(), samples.end()))};
}

Rsm build_rsm(const Signal& signal, RsmConfig cfg) { return build_rsm(signal.samples(), cfg); }

Egr gram(const Rsm& rsm) {
  const Matrix& x = rsm.values;
  for (double v : x.values()) {
    if (!std::isfinite(v)) throw NonFiniteError("RSM contains a non-finite value");
  }
  Matrix g(x.cols(), x.cols());
  kernels::plane_gram_forward<double>(1, x.rows(), x.cols(), x.values().data(), g.values().data());
  return Egr{std::move(g)};
}

Egr egr_of_signal(const Signal& signal, RsmConfig cfg) { return gram(build_rsm(signal, cfg)); }

StripeProfile stripe_profile(const Egr& egr) {
  const Matrix& g = egr.values;
  if (g.rows() != g.cols()) throw DimensionError("EGR must be square");
  const std::size_t n = g.rows();
  StripeProfile profile;
  profile.lag_means.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) sum += g(i, i + k);
    profile.lag_means[k] = sum / static_cast<double>(n - k);
  }
  return profile;
}

Signal normalize_sample(const Signal& signal, NormalizationMode mode) {
  const auto x = signal.samples();
  if (x.size() < 2) throw DegenerateSignalError("normalization needs at least 2 samples");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  if (*lo == *hi || !(var > 0.0)) throw DegenerateSignalError("signal has zero variance");
  const double scale = mode == NormalizationMode::variance ? var : std::sqrt(var);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / scale;
  return Signal(std::move(out), signal.sample_rate_hz(), signal.label());
}

double signal_power(std::span<const double> samples) {
  double sum = 0.0;
  for (double v : samples) sum += v * v;
  return sum / static_cast<double>(samples.size());
}

Signal add_noise_snr(const Signal& signal, const NoiseSpec& spec) {
  const double power = signal_power(signal.samples());
  if (!(power > 0.0)) throw DegenerateSignalError("cannot set an SNR for a zero-power signal");
  if (!std::isfinite(spec.snr_db)) throw InputError("SNR must be finite");
  const double noise_power = power / std::pow(10.0, spec.snr_db / 10.0);
  const double sigma = std::sqrt(noise_power);
  Rng rng(spec.rng_seed);
  std::vector<double> out(signal.samples().begin(), signal.samples().end());
  for (double& v : out) v += sigma * rng.gaussian();
  return Signal(std::move(out), signal.sample_rate_hz(), signal.label());
}

RsmConfig suggest_dims(std::size_t sample_length) {
  if (sample_length == 0) throw DimensionError("sample length must be positive");
  auto root = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(sample_length))));
  while (root * root > sample_length) --root;
  while ((root + 1) * (root + 1) <= sample_length) ++root;
  if (root * root != sample_length) {
    throw DimensionError("sample length " + std::to_string(sample_length) +
                         " is not a perfect square; truncate to " + std::to_string(root * root) + " or pad to " +
                         std::to_string((root + 1) * (root + 1)) + " samples explicitly");
  }
  return RsmConfig{root, root};
}

}  // namespace egr
