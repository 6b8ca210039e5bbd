#include "epe/optim.hpp"

#include <cmath>

#include "epe/error.hpp"

namespace epe {

double poly_lr(const PolySchedule& schedule, std::size_t iter) {
  if (schedule.max_iter == 0) throw ValueError("poly schedule needs max_iter >= 1");
  if (iter > schedule.max_iter) {
    throw ValueError("iteration " + std::to_string(iter) + " exceeds max_iter " + std::to_string(schedule.max_iter));
  }
  const double progress = static_cast<double>(iter) / static_cast<double>(schedule.max_iter);
  return schedule.initial_lr * std::pow(1.0 - progress, schedule.power);
}

template <typename T>
Adam<T>::Adam(const ParamRegistry<T>& registry, AdamConfig config) : registry_(&registry), config_(config) {
  for (const auto& p : registry.parameters()) {
    m_.emplace_back(p.var->value.shape());
    v_.emplace_back(p.var->value.shape());
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  const auto& params = registry_->parameters();
  if (params.size() != m_.size()) throw ValueError("optimizer was built for a different registry");

  // Reject before touching any parameter so a bad step leaves the model intact.
  for (const auto& p : params) {
    if (!p.var->has_grad()) continue;
    for (auto g : p.var->grad.values()) {
      if (!std::isfinite(static_cast<double>(g))) throw TrainingError("non-finite gradient in parameter '" + p.name + "'");
    }
  }

  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Node<T>& node = *params[i].var;
    T* w = node.value.data();
    const T* grad = node.has_grad() ? node.grad.data() : nullptr;
    T* m = m_[i].data();
    T* v = v_[i].data();
    const std::size_t n = node.value.numel();
    for (std::size_t j = 0; j < n; ++j) {
      const double g = (grad ? static_cast<double>(grad[j]) : 0.0) + config_.weight_decay * static_cast<double>(w[j]);
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * g;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      w[j] = static_cast<T>(static_cast<double>(w[j]) - lr * m_hat / (std::sqrt(v_hat) + config_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace epe
