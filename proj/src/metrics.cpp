#include "egr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "egr/error.hpp"
#include "egr/kernels/gemm.hpp"

namespace egr {

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= k_ ||
      static_cast<std::size_t>(predicted) >= k_) {
    throw InputError("confusion entry (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                     ") outside " + std::to_string(k_) + " classes");
  }
  ++counts_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(predicted)];
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += counts_[i * k_ + i];
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  return std::accumulate(counts_.begin() + static_cast<long>(truth * k_),
                         counts_.begin() + static_cast<long>((truth + 1) * k_), std::uint64_t{0});
}

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw DimensionError("truth and prediction counts differ");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

double accuracy_pct(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw InputError("accuracy of an empty confusion matrix");
  if (cm.num_classes() == 2) {
    const std::uint64_t tp = cm(1, 1);
    const std::uint64_t tn = cm(0, 0);
    const std::uint64_t fn = cm(1, 0);
    const std::uint64_t fp = cm(0, 1);
    return 100.0 * static_cast<double>(tp + tn) / static_cast<double>(tp + tn + fn + fp);
  }
  return 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(total);
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw InputError("mean of no values");
  MeanStd r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

namespace {

void check_points(const std::vector<std::vector<double>>& points, std::size_t labels) {
  if (points.empty()) throw InputError("no points");
  if (points.size() != labels) throw DimensionError("point and label counts differ");
  const std::size_t d = points.front().size();
  for (const auto& p : points) {
    if (p.size() != d) throw DimensionError("points differ in dimension");
  }
}

}  // namespace

std::vector<double> pairwise_distances(const std::vector<std::vector<double>>& points) {
  const std::size_t n = points.size();
  const std::size_t d = n ? points.front().size() : 0;
  std::vector<double> flat(n * d);
  for (std::size_t i = 0; i < n; ++i) std::copy(points[i].begin(), points[i].end(), flat.begin() + static_cast<long>(i * d));
  std::vector<double> dot(n * n);
  kernels::gemm(kernels::Trans::no, kernels::Trans::yes, n, n, d, 1.0, flat.data(), d, flat.data(), d, 0.0, dot.data(),
                n);
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double sq = dot[i * n + i] + dot[j * n + j] - 2.0 * dot[i * n + j];
      dist[i * n + j] = i == j ? 0.0 : std::sqrt(std::max(sq, 0.0));
    }
  }
  // exact symmetry regardless of rounding in the dot products
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) dist[j * n + i] = dist[i * n + j];
  }
  return dist;
}

double silhouette(const std::vector<std::vector<double>>& points, std::span<const int> labels) {
  check_points(points, labels.size());
  const std::size_t n = points.size();
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int l : labels) {
    if (l < 0) throw InputError("negative label");
    ++sizes[static_cast<std::size_t>(l)];
  }
  const std::vector<double> dist = pairwise_distances(points);
  double total = 0.0;
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(labels[i]);
    if (sizes[own] < 2) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) sums[static_cast<std::size_t>(labels[j])] += dist[i * n + j];
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    }
    if (!std::isfinite(b)) continue;  // a single cluster has no silhouette
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double knn1_loo_accuracy(const std::vector<std::vector<double>>& points, std::span<const int> labels) {
  check_points(points, labels.size());
  const std::size_t n = points.size();
  if (n < 2) throw InputError("leave-one-out needs at least two points");
  const std::vector<double> dist = pairwise_distances(points);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && dist[i * n + j] < dist[i * n + best]) best = j;
    }
    if (labels[best] == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

void standardize_features(std::vector<std::vector<double>>& points) {
  if (points.empty()) return;
  const std::size_t d = points.front().size();
  const auto n = static_cast<double>(points.size());
  for (std::size_t f = 0; f < d; ++f) {
    double mean = 0.0;
    for (const auto& p : points) mean += p[f];
    mean /= n;
    double var = 0.0;
    for (const auto& p : points) var += (p[f] - mean) * (p[f] - mean);
    const double sd = std::sqrt(var / n);
    for (auto& p : points) p[f] = sd > 0.0 ? (p[f] - mean) / sd : 0.0;
  }
}

}  // namespace egr
