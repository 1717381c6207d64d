#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace egr {

// counts(true_class, predicted_class).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0) : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  void add(int truth, int predicted);
  std::size_t num_classes() const { return k_; }
  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * k_ + predicted]; }

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes);

// Accuracy = (TP + TN) / (TP + TN + FN + FP), in percent. For two classes
// with class 1 as positive, TP = c(1,1), TN = c(0,0), FN = c(1,0),
// FP = c(0,1). For K > 2 every correct decision is a true positive of its
// class, so the same ratio is trace / total (micro accuracy).
double accuracy_pct(const ConfusionMatrix& cm);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for n = 1
};

MeanStd mean_std(std::span<const double> values);

// Rows of `points` are observations. Mean silhouette with Euclidean
// distance; members of singleton clusters score 0.
double silhouette(const std::vector<std::vector<double>>& points, std::span<const int> labels);

// Leave-one-out 1-nearest-neighbour accuracy in percent; distance ties go to
// the lower index.
double knn1_loo_accuracy(const std::vector<std::vector<double>>& points, std::span<const int> labels);

// Each feature column shifted to zero mean and scaled to unit (population)
// standard deviation; constant columns become 0.
void standardize_features(std::vector<std::vector<double>>& points);

// Full pairwise Euclidean distance matrix (row-major n x n).
std::vector<double> pairwise_distances(const std::vector<std::vector<double>>& points);

}  // namespace egr
