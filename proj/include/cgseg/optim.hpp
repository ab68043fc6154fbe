#pragma once

#include <cgseg/tensor.hpp>

#include <cstdint>

namespace cgseg {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw std::invalid_argument("adam: betas must lie in (0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be positive");
  }
};

template <class T>
struct OptimizerState {
  AdamConfig config;
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

template <class T>
OptimizerState<T> make_adam_state(const std::vector<Tensor<T>>& params, AdamConfig config = {}) {
  config.validate();
  OptimizerState<T> state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.size(), T{0});
    state.second_moment.emplace_back(p.size(), T{0});
  }
  return state;
}

/// One bias-corrected Adam update. Gradients are left in place.
template <class T>
void optimizer_step(std::vector<Tensor<T>>& params, OptimizerState<T>& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw std::invalid_argument("optimizer_step: moment buffers missing for " + std::to_string(params.size()) +
                                " parameters (have " + std::to_string(state.first_moment.size()) + ")");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].size() || state.second_moment[i].size() != params[i].size()) {
      throw std::invalid_argument("optimizer_step: moment buffer " + std::to_string(i) +
                                  " does not match parameter shape " + to_string(params[i].shape()));
    }
  }
  ++state.step_count;
  const auto& c = state.config;
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T corr1 = static_cast<T>(1.0 - std::pow(c.beta1, static_cast<double>(state.step_count)));
  const T corr2 = static_cast<T>(1.0 - std::pow(c.beta2, static_cast<double>(state.step_count)));
  const T lr = static_cast<T>(c.learning_rate), eps = static_cast<T>(c.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].data();
    auto grads = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const T g = grads[k];
      m[k] = b1 * m[k] + (T{1} - b1) * g;
      v[k] = b2 * v[k] + (T{1} - b2) * g * g;
      const T mhat = m[k] / corr1;
      const T vhat = v[k] / corr2;
      values[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <class T>
void zero_grad(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace cgseg
