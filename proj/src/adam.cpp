#include "fan/adam.hpp"

#include <cmath>

#include "fan/tensor.hpp"

namespace fan {

template <typename T>
void adam_step(std::span<const ParamSlot<T>> params, AdamState<T>& state, const AdamConfig& cfg) {
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size()) {
      throw ShapeError("adam_step: parameter '" + p.name + "' has " + std::to_string(p.value.size()) +
                       " values but " + std::to_string(p.grad.size()) + " gradients");
    }
    for (T g : p.grad) {
      if (!std::isfinite(g)) throw NonFiniteError("adam_step: non-finite gradient in '" + p.name + "'");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), T(0));
      state.v.emplace_back(p.value.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state tracks a different parameter set");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= static_cast<T>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template void adam_step(std::span<const ParamSlot<float>>, AdamState<float>&, const AdamConfig&);
template void adam_step(std::span<const ParamSlot<double>>, AdamState<double>&, const AdamConfig&);

}  // namespace fan
