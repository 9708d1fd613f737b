// SPDX-License-Identifier: Apache-2.0
#include "advt/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "advt/errors.hpp"

namespace advt {

double OptimizerState::learning_rate() const { return base_lr * std::pow(decay, static_cast<double>(step)); }

void adam_step(ParamSet& params, const GradientSet& grads, OptimizerState& state) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("gradient for unknown parameter '" + name + "'");
    if (g.shape() != it->second.shape()) throw ShapeError("gradient shape mismatch for '" + name + "'");
    if (!g.all_finite()) throw NumericalError("non-finite gradient for parameter '" + name + "'");
  }
  const double lr = state.learning_rate();
  const double t = static_cast<double>(state.step + 1);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    Tensor& m = state.first_moment.try_emplace(name, g.shape(), 0.0).first->second;
    Tensor& v = state.second_moment.try_emplace(name, g.shape(), 0.0).first->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / correction1) / (std::sqrt(v[i] / correction2) + state.epsilon);
    }
  }
  ++state.step;
}

double clip_gradients(GradientSet& grads, double clip_norm) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
  double squared = 0.0;
  for (const auto& [name, g] : grads) {
    if (name == param::kEmbedding) continue;
    for (double x : g.data()) squared += x * x;
  }
  const double norm = std::sqrt(squared);
  if (norm > clip_norm) {
    const double factor = clip_norm / norm;
    for (auto& [name, g] : grads) {
      if (name == param::kEmbedding) continue;
      for (double& x : g.data()) x *= factor;
    }
  }
  return norm;
}

}  // namespace advt
