// SPDX-License-Identifier: Apache-2.0
// One finite-difference case per autodiff primitive.
#pragma once

#include <string_view>
#include <vector>

#include "gradcheck.hpp"

namespace advt::testing {

struct PrimitiveCase {
  const char* name;
  std::vector<Shape> shapes;
  ScalarFn fn;
  double lo = -1.0;
  double hi = 1.0;
};

/// Weight of output entry i in weighted_sum.
inline double entry_weight(std::size_t i) { return 0.3 + 0.17 * static_cast<double>(i % 7); }

/// Weighted sums make every output entry matter with a distinct weight.
inline Var weighted_sum(Var v) {
  Tensor w(v.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = entry_weight(i);
  return sum(v * v.graph->constant(w));
}

/// stop_gradient is the one case finite differences cannot check: they also
/// move the blocked copy. Its analytic gradient is entry_weight(i) * x[i].
inline std::vector<PrimitiveCase> primitive_cases() {
  return {
      {"add", {{2, 3}, {2, 3}}, [](Graph&, auto& x) { return weighted_sum(x[0] + x[1]); }},
      {"add broadcast", {{2, 3}, {3}}, [](Graph&, auto& x) { return weighted_sum(x[0] + x[1]); }},
      {"sub broadcast", {{2, 1}, {2, 3}}, [](Graph&, auto& x) { return weighted_sum(x[0] - x[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](Graph&, auto& x) { return weighted_sum(x[0] * x[1]); }},
      {"mul broadcast", {{4, 2, 3}, {2, 1}}, [](Graph&, auto& x) { return weighted_sum(x[0] * x[1]); }},
      {"div", {{2, 3}, {2, 3}}, [](Graph&, auto& x) { return weighted_sum(x[0] / x[1]); }, 0.5, 2.0},
      {"scale", {{5}}, [](Graph&, auto& x) { return weighted_sum(scale(x[0], -2.5)); }},
      {"add_scalar", {{5}}, [](Graph&, auto& x) { return weighted_sum(add_scalar(x[0], 0.7)); }},
      {"sigmoid", {{2, 3}}, [](Graph&, auto& x) { return weighted_sum(sigmoid(x[0])); }, -3, 3},
      {"tanh", {{2, 3}}, [](Graph&, auto& x) { return weighted_sum(tanh(x[0])); }, -3, 3},
      {"relu", {{2, 3}}, [](Graph&, auto& x) { return weighted_sum(relu(x[0])); }},
      {"exp", {{2, 3}}, [](Graph&, auto& x) { return weighted_sum(exp(x[0])); }},
      {"log", {{2, 3}}, [](Graph&, auto& x) { return weighted_sum(log(x[0])); }, 0.5, 2.0},
      {"sqrt", {{2, 3}}, [](Graph&, auto& x) { return weighted_sum(sqrt(x[0])); }, 0.5, 2.0},
      {"clamp_min", {{2, 3}}, [](Graph&, auto& x) { return weighted_sum(clamp_min(x[0], 0.1)); }},
      {"square", {{2, 3}}, [](Graph&, auto& x) { return weighted_sum(square(x[0])); }},
      {"softmax", {{2, 4}}, [](Graph&, auto& x) { return weighted_sum(softmax(x[0])); }, -2, 2},
      {"log_softmax", {{2, 4}}, [](Graph&, auto& x) { return weighted_sum(log_softmax(x[0])); }, -2, 2},
      {"matmul", {{2, 3}, {3, 4}}, [](Graph&, auto& x) { return weighted_sum(matmul(x[0], x[1])); }},
      {"sum", {{3, 2}}, [](Graph&, auto& x) { return scale(sum(x[0]), 1.3); }},
      {"mean", {{3, 2}}, [](Graph&, auto& x) { return scale(mean(x[0]), 1.3); }},
      {"sum_axis", {{2, 3, 2}}, [](Graph&, auto& x) { return weighted_sum(sum_axis(x[0], 1)); }},
      {"l2_norm", {{2, 3}}, [](Graph&, auto& x) { return l2_norm(x[0]); }},
      {"concat", {{2, 1}, {2, 3}}, [](Graph&, auto& x) { return weighted_sum(concat(std::vector<Var>{x[0], x[1]}, 1)); }},
      {"slice", {{3, 4}}, [](Graph&, auto& x) { return weighted_sum(slice(x[0], 1, 1, 3)); }},
      {"reshape", {{3, 4}}, [](Graph&, auto& x) { return weighted_sum(reshape(x[0], {2, 6})); }},
      {"gather_rows", {{4, 2}},
       [](Graph&, auto& x) {
         const std::size_t ids[] = {3, 0, 3, 1};
         return weighted_sum(gather_rows(x[0], ids));
       }},
      {"gather_time", {{2, 3, 2}},
       [](Graph&, auto& x) {
         const std::size_t idx[] = {2, 1, 0, 1, 0, 2};
         return weighted_sum(gather_time(x[0], idx));
       }},
      {"where_rows", {{3, 2}, {3, 2}},
       [](Graph&, auto& x) {
         const char keep[] = {1, 0, 1};
         return weighted_sum(where_rows(keep, x[0], x[1]));
       }},
      {"dropout", {{4, 5}},
       [](Graph&, auto& x) {
         RngStream r(5);
         return weighted_sum(dropout(x[0], 0.3, r, true));
       }},
      {"stop_gradient", {{2, 2}}, [](Graph&, auto& x) { return weighted_sum(x[0] * stop_gradient(x[0])); }},
      {"kl_categorical", {{2, 3}, {2, 3}}, [](Graph&, auto& x) { return kl_categorical(x[0], x[1]); }, -2, 2},
  };
}

}  // namespace advt::testing
