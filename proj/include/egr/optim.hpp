#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "egr/tensor.hpp"

namespace egr {

template <typename T>
struct AdamState {
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(std::size_t size = 0) : first_moment(size, T(0)), second_moment(size, T(0)) {}
};

// One bias-corrected Adam update of `params` in place.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr);

// Adam over a fixed list of parameter tensors (each with a grad buffer).
template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<Tensor<T>*> params);

  void step(double lr);
  void zero_grad();

  const std::vector<AdamState<T>>& states() const { return states_; }

 private:
  std::vector<Tensor<T>*> params_;
  std::vector<AdamState<T>> states_;
};

// lr(epoch) = initial * factor^floor(epoch / every), epochs 0-based.
double stepped_learning_rate(double initial, double factor, int every, int epoch);

}  // namespace egr
