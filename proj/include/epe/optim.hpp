#pragma once

#include <cstddef>
#include <vector>

#include "epe/nn.hpp"

namespace epe {

struct PolySchedule {
  double initial_lr = 1e-3;
  double power = 0.9;
  std::size_t max_iter = 1;
};

/// initial_lr * (1 - iter / max_iter)^power for 0 <= iter <= max_iter.
double poly_lr(const PolySchedule& schedule, std::size_t iter);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Coupled L2: added to the gradient before the moment updates.
  double weight_decay = 1e-4;
};

/// Adam with bias correction over every parameter of a registry.
template <typename T>
class Adam {
 public:
  explicit Adam(const ParamRegistry<T>& registry, AdamConfig config = {});

  /// One update from the gradients currently held by the parameters. A parameter
  /// without a gradient buffer is treated as having a zero gradient.
  void step(double lr);

  std::size_t steps() const noexcept { return t_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  const ParamRegistry<T>* registry_;
  AdamConfig config_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::size_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace epe
