#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "epe/error.hpp"
#include "epe/rng.hpp"
#include "epe/verify.hpp"

namespace epe::verify {

GradCheckResult check_gradients(std::span<const NamedVar> inputs, const std::function<Var<double>()>& loss_fn,
                                const GradCheckOptions& options) {
  for (const auto& in : inputs) in.var->zero_grad();
  const Var<double> loss = loss_fn();
  backward(loss);
  std::vector<Tensor<double>> analytic;
  for (const auto& in : inputs) {
    analytic.push_back(in.var->has_grad() ? in.var->grad : Tensor<double>(in.var->value.shape()));
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor<double>& value = inputs[t].var->value;
    std::vector<std::size_t> coords(value.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor && coords.size() > options.max_coords_per_tensor) {
      for (std::size_t i = 0; i < options.max_coords_per_tensor; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(options.max_coords_per_tensor);
    }
    for (auto idx : coords) {
      const double a = analytic[t][idx];
      double rel = INFINITY, numeric = 0.0;
      for (double step : {options.step, options.fallback_step}) {
        if (step <= 0.0) continue;
        const double saved = value[idx];
        value[idx] = saved + step;
        const double plus = loss_fn()->value[0];
        value[idx] = saved - step;
        const double minus = loss_fn()->value[0];
        value[idx] = saved;
        const double estimate = (plus - minus) / (2.0 * step);
        const double denom = std::max({std::abs(a), std::abs(estimate), options.denominator_floor});
        const double err = std::abs(a - estimate) / denom;
        if (!(err >= rel)) {
          rel = err;
          numeric = estimate;
        }
      }
      ++result.coords_checked;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        char values[80];
        std::snprintf(values, sizeof values, " analytic %.6e numeric %.6e", a, numeric);
        result.worst = inputs[t].name + "[" + std::to_string(idx) + "]" + values;
      }
    }
  }
  return result;
}

}  // namespace epe::verify
