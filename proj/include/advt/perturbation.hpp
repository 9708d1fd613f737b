// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "advt/graph.hpp"
#include "advt/model.hpp"
#include "advt/rng.hpp"

namespace advt {

enum class PerturbationKind {
  kNone,
  kAdversarial,
  kVirtual,
  kAdversarialVirtual,
  kRandomLabeled,    // random direction in place of r_adv
  kRandomUnlabeled,  // random direction in place of r_vadv
};

/// CLI method names: baseline | adv | vat | adv+vat | rand-l | rand-u.
PerturbationKind parse_method(std::string_view method);
std::string_view method_name(PerturbationKind kind);
bool uses_labeled_perturbation(PerturbationKind kind);    // adv, adv+vat, rand-l
bool uses_unlabeled_perturbation(PerturbationKind kind);  // vat, adv+vat, rand-u

struct PerturbationConfig {
  double epsilon = 5.0;
  double xi = 0.1;
  PerturbationKind kind = PerturbationKind::kNone;

  void validate() const;  // throws ConfigError
};

/// Gradients smaller than this give a zero perturbation.
inline constexpr double kZeroGradient = 1e-12;

/// Builds class logits [B, C] for an embedded input inside `graph`.
using LogitsFn = std::function<Var(Graph& graph, Var s)>;

/// Logits of `model` with its parameters bound as constants in whichever
/// graph is passed: the gradient-free copy used to construct perturbations.
LogitsFn frozen_logits(const Model& model, std::span<const std::size_t> lengths);

/// Logits of an already bound model; gradients reach its parameters.
LogitsFn live_logits(const BoundModel& model, std::span<const std::size_t> lengths);

struct Perturbation {
  Tensor r;                            // shape of s, zero on padding
  std::vector<double> gradient_norms;  // per example, of the driving vector before scaling
};

/// Rescales every example of `v` (leading axis) to L2 norm `epsilon` over its
/// unmasked entries; padding is zeroed first. `mask` is [B, T] for s =
/// [B, T, D], or a default-constructed (rank-0) Tensor when every entry is
/// real. Examples whose norm is below kZeroGradient become zero. Returns the
/// pre-scaling norms.
std::vector<double> scale_per_example(Tensor& v, const Tensor& mask, double epsilon);

/// r = -epsilon g / ||g|| with g = d/ds sum_n log p(y_n | s_n).
Perturbation adversarial_perturbation(const LogitsFn& frozen, const Tensor& s, const Tensor& mask,
                                      std::span<const std::size_t> labels, double epsilon);

/// One power iteration: d = xi u with u a random unit vector per example,
/// g = d/dx mean_n KL(p(.|s) || p(.|x)) at x = s + d, r = epsilon g / ||g||.
Perturbation virtual_adversarial_perturbation(const LogitsFn& frozen, const Tensor& s, const Tensor& mask,
                                              const PerturbationConfig& config, RngStream& rng);

/// Gaussian direction rescaled to norm epsilon per example.
Perturbation random_perturbation(const Tensor& s, const Tensor& mask, double epsilon, RngStream& rng);

/// -(1/N) sum_n log p(y_n | s_n + r_n); r enters as a constant.
Var adversarial_loss(const LogitsFn& live, Var s, const Tensor& r, std::span<const std::size_t> labels);

/// (1/N') sum_n KL(p(.|s_n) || p(.|s_n + r_n)); the clean side is cut from
/// the gradient. `clean_logits` may be passed to reuse a forward pass.
Var virtual_adversarial_loss(const LogitsFn& live, Var s, const Tensor& r, const Var* clean_logits = nullptr);

}  // namespace advt
