#include "vrf/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "vrf/mathutil.hpp"

namespace vrf {

void adamw_step(ParamStore& params, OptimState& state, double lr) {
  const std::uint64_t t = params.step_count + 1;  // bias correction is 1-based
  const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(t));
  for (auto& [name, e] : params) {
    if (!is_trainable_name(name)) continue;
    auto& [m, v] = state.moments[name];
    if (m.empty()) {
      m.assign(e.size(), 0.0);
      v.assign(e.size(), 0.0);
    }
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double g = e.grad[i];
      if (!std::isfinite(g))
        throw std::runtime_error("adamw_step: non-finite gradient in " + name +
                                 "[" + std::to_string(i) + "]");
      m[i] = state.cfg.beta1 * m[i] + (1.0 - state.cfg.beta1) * g;
      v[i] = state.cfg.beta2 * v[i] + (1.0 - state.cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      e.value[i] -= lr * (m_hat / (std::sqrt(v_hat) + state.cfg.epsilon) +
                          state.cfg.weight_decay * e.value[i]);
    }
    std::fill(e.grad.begin(), e.grad.end(), 0.0);
  }
  params.step_count = t;
}

double cosine_lr(std::size_t step, std::size_t total, double base) {
  if (total == 0 || step >= total)
    return step == 0 ? base : 0.0;  // total==0: a single-step schedule
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(kPi * frac));
}

double scheduled_lr(const OptimState& state, std::size_t step) {
  double lr = cosine_lr(step, state.total_steps, state.base_lr);
  if (state.warmup_steps > 0 && step < state.warmup_steps)
    lr *= static_cast<double>(step + 1) / static_cast<double>(state.warmup_steps);
  return lr;
}

}  // namespace vrf
