#include "egr/optim.hpp"

#include <cmath>

#include "egr/error.hpp"

namespace egr {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment lengths differ");
  }
  state.step_count += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = b1 * state.first_moment[i] + (1.0 - b1) * g;
    const double v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
    state.first_moment[i] = static_cast<T>(m);
    state.second_moment[i] = static_cast<T>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] = static_cast<T>(params[i] - lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>*> params) : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (Tensor<T>* p : params_) {
    if (!p->has_grad()) throw Error("Adam: parameter tensor has no gradient buffer");
    states_.emplace_back(p->size());
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = *params_[i];
    adam_step<T>(p.data(), p.grad(), states_[i], lr);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (Tensor<T>* p : params_) p->zero_grad();
}

double stepped_learning_rate(double initial, double factor, int every, int epoch) {
  if (every <= 0) return initial;
  return initial * std::pow(factor, epoch / every);
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, double);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&, double);
template class Adam<float>;
template class Adam<double>;

}  // namespace egr
