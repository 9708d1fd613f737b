// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "advt/model.hpp"

namespace advt {

/// Gradients keyed like ParamSet.
using GradientSet = std::map<std::string, Tensor>;

struct OptimizerState {
  std::uint64_t step = 0;  // completed updates
  double base_lr = 0.001;
  double decay = 0.9999;  // per step
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  ParamSet first_moment;
  ParamSet second_moment;

  /// base_lr * decay^step: the rate the next update will use.
  double learning_rate() const;
};

/// One Adam update with bias correction at the decayed learning rate.
/// Parameters without a gradient entry are left alone. Throws NumericalError
/// on a non-finite gradient before touching anything.
void adam_step(ParamSet& params, const GradientSet& grads, OptimizerState& state);

/// Scales every non-embedding gradient by clip_norm / norm when their joint L2
/// norm exceeds clip_norm; the embedding gradient is never scaled. Returns
/// the joint norm before clipping.
double clip_gradients(GradientSet& grads, double clip_norm);

}  // namespace advt
