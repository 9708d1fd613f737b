// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advt/checkpoint.hpp"
#include "advt/errors.hpp"
#include "advt/perturbation.hpp"
#include "advt/text.hpp"

namespace advt {

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  std::size_t unlabeled_batch_size = 16;
  double clip_norm = 1.0;
  double dropout = 0.5;  // embedding dropout rate
  double learning_rate = 0.001;
  double lr_decay = 0.9999;
  PerturbationConfig perturbation;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
  std::size_t eval_batch_size = 64;
  /// Fixed epsilon for the L_adv / L_vadv columns of the metric log.
  double diagnostic_epsilon = 5.0;

  void validate() const;  // throws ConfigError
};

/// Non-finite loss or gradient during training. Carries the parameters from
/// before the failing step.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, Checkpoint last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const noexcept { return last_good_; }

 private:
  Checkpoint last_good_;
};

struct MetricRow {
  std::uint64_t step = 0;
  std::string split;
  double nll = 0.0;
  double error_rate = 0.0;
  double l_adv = 0.0;
  double l_vadv = 0.0;
};

inline constexpr std::string_view kMetricHeader = "step,split,nll,error_rate,l_adv,l_vadv";

/// Header line plus one line per row; values printed round-trip exact.
std::string metrics_csv(std::span<const MetricRow> rows);
void write_metrics(const std::filesystem::path& path, std::span<const MetricRow> rows);

/// Loss terms of one classifier step. Absent terms are not part of `total`.
struct StepLosses {
  Var total;
  Var nll;
  std::optional<Var> adversarial;          // L_adv, or its random-direction control
  std::optional<Var> virtual_adversarial;  // L_vadv, or its random-direction control
};

/// normalize -> lookup -> dropout -> perturbation -> losses, for the method in
/// config.perturbation.kind. `model` must be the Model `bound` was built
/// from. `unlabeled` is required by the virtual and random-unlabeled kinds.
StepLosses classifier_objective(const Model& model, const BoundModel& bound, const Batch& labeled,
                                const Batch* unlabeled, const TrainConfig& config, RngStream& rng);

struct Evaluation {
  double nll = 0.0;
  double error_rate = 0.0;
  double l_adv = 0.0;
  double l_vadv = 0.0;
};

/// Mean NLL and error rate over labeled sequences without dropout, plus
/// L_adv and L_vadv at `epsilon`. Batches are taken in order; `seed` drives
/// the VAT probe.
Evaluation evaluate_classifier(const Model& model, std::span<const Sequence> data, double epsilon, double xi,
                               std::size_t batch_size, std::uint64_t seed);

/// Mean next-token cross-entropy (summed over directions) without dropout.
double evaluate_lm(const Model& model, std::span<const Sequence> data, std::size_t batch_size);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricRow> metrics;  // classifier runs
  std::vector<double> losses;      // training loss per step
};

/// Next-token language-model training on every sequence. `init` must carry
/// LM heads.
TrainResult pretrain_lm(const Model& init, std::uint64_t vocab_fingerprint, std::span<const Sequence> corpus,
                        const TrainConfig& config);

/// Classifier training. `init` must carry a classifier head. The virtual
/// adversarial term samples from labeled and unlabeled sequences with labels
/// stripped. Metrics are logged for split "train" (the labeled set) and
/// "test" when `test` is non-empty, at step 0, every eval_every steps, and
/// after the last step.
TrainResult train_classifier(const Model& init, std::uint64_t vocab_fingerprint, std::span<const Sequence> labeled,
                             std::span<const Sequence> unlabeled, std::span<const Sequence> test,
                             const TrainConfig& config);

}  // namespace advt
