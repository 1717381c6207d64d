#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace egr {

// One vibration sample. The constructor enforces the invariants: nonempty,
// finite values, positive sample rate.
class Signal {
 public:
  Signal(std::vector<double> samples, double sample_rate_hz, std::optional<int> label = std::nullopt);

  std::span<const double> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  double sample_rate_hz() const { return sample_rate_hz_; }
  std::optional<int> label() const { return label_; }

 private:
  std::vector<double> samples_;
  double sample_rate_hz_;
  std::optional<int> label_;
};

// Row-major dense real matrix, 0-based.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double max_abs() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Embedding dimension m (rows) and state-vector count n (columns).
struct RsmConfig {
  std::size_t m = 0;
  std::size_t n = 0;
};

// Raw signal matrix: the m x n reshape of a length m*n signal. With 0-based
// indices, entry (i, j) holds sample i*n + j, so column j is the state vector
// [x(j), x(n+j), x(2n+j), ...].
struct Rsm {
  Matrix values;
};

// Embedding Gramian representation G = X^T X of an RSM; n x n, symmetric, PSD.
struct Egr {
  Matrix values;
};

struct NoiseSpec {
  double snr_db = 0.0;
  std::uint64_t rng_seed = 0;
};

// lag_means[k] is the mean of the k-th diagonal of an EGR.
struct StripeProfile {
  std::vector<double> lag_means;

  // Lag in [first, last] with the largest mean. Entries within a relative
  // 1e-9 of the maximum count as ties and resolve to the smallest lag.
  std::size_t dominant_lag(std::size_t first, std::size_t last) const;
};

enum class NormalizationMode {
  variance,            // (x - mean) / variance
  standard_deviation,  // (x - mean) / std
};

Rsm build_rsm(const Signal& signal, RsmConfig cfg);
Rsm build_rsm(std::span<const double> samples, RsmConfig cfg);

Egr gram(const Rsm& rsm);

Egr egr_of_signal(const Signal& signal, RsmConfig cfg);

StripeProfile stripe_profile(const Egr& egr);

// Mean-centres the sample and divides by its population variance (or by the
// standard deviation). Throws DegenerateSignalError for constant input.
Signal normalize_sample(const Signal& signal, NormalizationMode mode = NormalizationMode::variance);

// Mean of squared samples.
double signal_power(std::span<const double> samples);

// x + w with w ~ N(0, P_x / 10^(snr_db / 10)) i.i.d., drawn from the seeded
// Box-Muller generator in rng.hpp. Throws DegenerateSignalError for zero power.
Signal add_noise_snr(const Signal& signal, const NoiseSpec& spec);

// m = n = sqrt(length) for perfect-square lengths; DimensionError otherwise.
RsmConfig suggest_dims(std::size_t sample_length);

}  // namespace egr
