// SPDX-License-Identifier: Apache-2.0
#include "advt/perturbation.hpp"

#include <cmath>
#include <string>

#include "advt/errors.hpp"

namespace advt {

namespace {

struct MethodName {
  PerturbationKind kind;
  std::string_view name;
};

constexpr MethodName kMethods[] = {
    {PerturbationKind::kNone, "baseline"},          {PerturbationKind::kAdversarial, "adv"},
    {PerturbationKind::kVirtual, "vat"},            {PerturbationKind::kAdversarialVirtual, "adv+vat"},
    {PerturbationKind::kRandomLabeled, "rand-l"},   {PerturbationKind::kRandomUnlabeled, "rand-u"},
};

// Entries of each mask position: s = [B, T, D] with mask [B, T] gives D.
std::size_t entries_per_position(const Tensor& v, const Tensor& mask) {
  if (mask.rank() == 0) return 0;
  if (v.rank() < 2 || mask.rank() != 2 || mask.dim(0) != v.dim(0) || v.size() % mask.size() != 0 ||
      mask.dim(1) != v.dim(1)) {
    throw ShapeError("perturbation mask " + shape_string(mask.shape()) + " does not fit " + shape_string(v.shape()));
  }
  return v.size() / mask.size();
}

// Standard normal draws at real entries only, so padding never shifts the
// stream.
Tensor masked_gaussian(const Shape& shape, const Tensor& mask, RngStream& rng) {
  Tensor out(shape, 0.0);
  const std::size_t per_position = entries_per_position(out, mask);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (per_position == 0 || mask[i / per_position] != 0.0) out[i] = rng.normal();
  }
  return out;
}

void require_batch(const Tensor& s) {
  if (s.rank() < 2 || s.dim(0) == 0) throw ShapeError("perturbation input must be batched, got " + shape_string(s.shape()));
}

}  // namespace

PerturbationKind parse_method(std::string_view method) {
  for (const auto& m : kMethods) {
    if (m.name == method) return m.kind;
  }
  throw ConfigError("unknown method '" + std::string(method) + "' (expected baseline, adv, vat, adv+vat, rand-l, rand-u)");
}

std::string_view method_name(PerturbationKind kind) {
  for (const auto& m : kMethods) {
    if (m.kind == kind) return m.name;
  }
  return "?";
}

bool uses_labeled_perturbation(PerturbationKind kind) {
  return kind == PerturbationKind::kAdversarial || kind == PerturbationKind::kAdversarialVirtual ||
         kind == PerturbationKind::kRandomLabeled;
}

bool uses_unlabeled_perturbation(PerturbationKind kind) {
  return kind == PerturbationKind::kVirtual || kind == PerturbationKind::kAdversarialVirtual ||
         kind == PerturbationKind::kRandomUnlabeled;
}

void PerturbationConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be positive");
  if (!(xi > 0.0) || !std::isfinite(xi)) throw ConfigError("xi must be positive");
}

LogitsFn frozen_logits(const Model& model, std::span<const std::size_t> lengths) {
  return [&model, lengths](Graph& graph, Var s) {
    const BoundModel bound(graph, model, Binding::kFrozen);
    return classifier_logits(bound, s, lengths);
  };
}

LogitsFn live_logits(const BoundModel& model, std::span<const std::size_t> lengths) {
  return [&model, lengths](Graph&, Var s) { return classifier_logits(model, s, lengths); };
}

std::vector<double> scale_per_example(Tensor& v, const Tensor& mask, double epsilon) {
  require_batch(v);
  const std::size_t batch = v.dim(0);
  const std::size_t inner = v.size() / batch;
  const std::size_t per_position = entries_per_position(v, mask);
  std::vector<double> norms(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::span<double> row = v.data().subspan(b * inner, inner);
    if (per_position != 0) {
      for (std::size_t i = 0; i < inner; ++i) {
        if (mask[b * mask.dim(1) + i / per_position] == 0.0) row[i] = 0.0;
      }
    }
    norms[b] = l2_norm(row);
    const double factor = norms[b] < kZeroGradient ? 0.0 : epsilon / norms[b];
    for (double& x : row) x *= factor;
  }
  return norms;
}

Perturbation adversarial_perturbation(const LogitsFn& frozen, const Tensor& s, const Tensor& mask,
                                      std::span<const std::size_t> labels, double epsilon) {
  require_batch(s);
  if (labels.size() != s.dim(0)) throw DataError("adversarial perturbation needs a label for every example");
  Graph probe;
  const Var x = probe.parameter(s);
  const Var log_probs = log_softmax(frozen(probe, x));
  Tensor one_hot(log_probs.shape(), 0.0);
  const std::size_t classes = one_hot.dim(1);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] >= classes) throw DataError("label " + std::to_string(labels[n]) + " outside class range");
    one_hot.at(n, labels[n]) = 1.0;
  }
  const Var objective = sum(log_probs * probe.constant(std::move(one_hot)));
  Tensor r = probe.gradient(objective, x);
  Perturbation out{std::move(r), {}};
  out.gradient_norms = scale_per_example(out.r, mask, epsilon);
  for (double& v : out.r.data()) v = -v;
  return out;
}

Perturbation virtual_adversarial_perturbation(const LogitsFn& frozen, const Tensor& s, const Tensor& mask,
                                              const PerturbationConfig& config, RngStream& rng) {
  require_batch(s);
  Tensor d = masked_gaussian(s.shape(), mask, rng);
  scale_per_example(d, mask, config.xi);
  Tensor probe_point = s;
  for (std::size_t i = 0; i < d.size(); ++i) probe_point[i] += d[i];

  Graph probe;
  const Var clean = probe.constant(s);
  const Var x = probe.parameter(std::move(probe_point));
  const Var clean_logits = stop_gradient(frozen(probe, clean));
  const Var objective = kl_categorical(clean_logits, frozen(probe, x));
  Perturbation out{probe.gradient(objective, x), {}};
  out.gradient_norms = scale_per_example(out.r, mask, config.epsilon);
  return out;
}

Perturbation random_perturbation(const Tensor& s, const Tensor& mask, double epsilon, RngStream& rng) {
  require_batch(s);
  Perturbation out{masked_gaussian(s.shape(), mask, rng), {}};
  out.gradient_norms = scale_per_example(out.r, mask, epsilon);
  return out;
}

Var adversarial_loss(const LogitsFn& live, Var s, const Tensor& r, std::span<const std::size_t> labels) {
  if (labels.empty()) throw DataError("adversarial loss needs at least one labeled example");
  Graph& g = *s.graph;
  return nll(log_softmax(live(g, s + g.constant(r))), labels);
}

Var virtual_adversarial_loss(const LogitsFn& live, Var s, const Tensor& r, const Var* clean_logits) {
  if (s.shape().empty() || s.shape()[0] == 0) throw DataError("virtual adversarial loss needs at least one example");
  Graph& g = *s.graph;
  const Var clean = stop_gradient(clean_logits != nullptr ? *clean_logits : live(g, s));
  return kl_categorical(clean, live(g, s + g.constant(r)));
}

}  // namespace advt
