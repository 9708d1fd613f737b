// SPDX-License-Identifier: Apache-2.0
#include "advt/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace advt {

namespace {

std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::size_t pad_id(const Model& model) { return model.config.vocab_rows - 1; }

// Consecutive chunks of `data`, in order.
std::vector<Batch> ordered_batches(std::span<const Sequence> data, std::size_t batch_size, std::size_t pad) {
  std::vector<Batch> out;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    out.push_back(collate(data.subspan(start, std::min(batch_size, data.size() - start)), pad));
  }
  return out;
}

GradientSet collect_gradients(const BoundModel& bound, const Gradients& grads) {
  GradientSet out;
  for (const auto& [name, var] : bound.vars()) out.emplace(name, grads.of(var));
  return out;
}

OptimizerState fresh_optimizer(const TrainConfig& config) {
  OptimizerState state;
  state.base_lr = config.learning_rate;
  state.decay = config.lr_decay;
  return state;
}

std::size_t count_errors(const Tensor& log_probs, std::span<const std::size_t> labels) {
  std::size_t errors = 0;
  const std::size_t classes = log_probs.dim(1);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (log_probs.at(n, c) > log_probs.at(n, best)) best = c;
    }
    errors += best != labels[n];
  }
  return errors;
}

}  // namespace

void TrainConfig::validate() const {
  if (steps == 0) throw ConfigError("steps must be at least 1");
  if (batch_size == 0 || unlabeled_batch_size == 0 || eval_batch_size == 0) {
    throw ConfigError("batch sizes must be at least 1");
  }
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (eval_every == 0) throw ConfigError("eval_every must be at least 1");
  if (!(diagnostic_epsilon > 0.0)) throw ConfigError("diagnostic_epsilon must be positive");
  perturbation.validate();
}

std::string metrics_csv(std::span<const MetricRow> rows) {
  std::string out(kMetricHeader);
  out += '\n';
  for (const MetricRow& r : rows) {
    out += std::to_string(r.step) + "," + r.split + "," + number(r.nll) + "," + number(r.error_rate) + "," +
           number(r.l_adv) + "," + number(r.l_vadv) + "\n";
  }
  return out;
}

void write_metrics(const std::filesystem::path& path, std::span<const MetricRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write metrics " + path.string());
  out << metrics_csv(rows);
  if (!out) throw DataError("failed writing metrics " + path.string());
}

StepLosses classifier_objective(const Model& model, const BoundModel& bound, const Batch& labeled,
                                const Batch* unlabeled, const TrainConfig& config, RngStream& rng) {
  const PerturbationKind kind = config.perturbation.kind;
  const double eps = config.perturbation.epsilon;
  const std::vector<std::size_t> labels = labeled.label_vector();

  const Var s = embed_batch(bound, labeled, config.dropout, rng, true);
  const LogitsFn live = live_logits(bound, labeled.lengths);
  const Var logits = live(bound.graph(), s);
  StepLosses out{Var{}, nll(log_softmax(logits), labels), std::nullopt, std::nullopt};
  out.total = out.nll;

  if (uses_labeled_perturbation(kind)) {
    const Perturbation r = kind == PerturbationKind::kRandomLabeled
                               ? random_perturbation(s.value(), labeled.mask, eps, rng)
                               : adversarial_perturbation(frozen_logits(model, labeled.lengths), s.value(),
                                                          labeled.mask, labels, eps);
    out.adversarial = adversarial_loss(live, s, r.r, labels);
    out.total = out.total + *out.adversarial;
  }
  if (uses_unlabeled_perturbation(kind)) {
    if (unlabeled == nullptr) throw ConfigError("method '" + std::string(method_name(kind)) + "' needs unlabeled data");
    const Var su = embed_batch(bound, *unlabeled, config.dropout, rng, true);
    const Perturbation r = kind == PerturbationKind::kRandomUnlabeled
                               ? random_perturbation(su.value(), unlabeled->mask, eps, rng)
                               : virtual_adversarial_perturbation(frozen_logits(model, unlabeled->lengths), su.value(),
                                                                  unlabeled->mask, config.perturbation, rng);
    out.virtual_adversarial = virtual_adversarial_loss(live_logits(bound, unlabeled->lengths), su, r.r);
    out.total = out.total + *out.virtual_adversarial;
  }
  return out;
}

Evaluation evaluate_classifier(const Model& model, std::span<const Sequence> data, double epsilon, double xi,
                               std::size_t batch_size, std::uint64_t seed) {
  if (data.empty()) throw DataError("nothing to evaluate");
  RngStream rng(seed);
  const PerturbationConfig vat{epsilon, xi, PerturbationKind::kVirtual};
  double nll_sum = 0.0, adv_sum = 0.0, vadv_sum = 0.0;
  std::size_t errors = 0;
  for (const Batch& batch : ordered_batches(data, batch_size, pad_id(model))) {
    const std::vector<std::size_t> labels = batch.label_vector();
    const double n = static_cast<double>(batch.batch_size);
    Graph g;
    const BoundModel bound(g, model, Binding::kFrozen);
    const Var s = embed_batch(bound, batch, 0.0, rng, false);
    const LogitsFn frozen = frozen_logits(model, batch.lengths);
    const LogitsFn live = live_logits(bound, batch.lengths);
    const Var logits = live(g, s);
    const Tensor log_probs = log_softmax(logits).value();
    errors += count_errors(log_probs, labels);
    nll_sum += n * nll(g.constant(log_probs), labels).value().item();
    const Perturbation adv = adversarial_perturbation(frozen, s.value(), batch.mask, labels, epsilon);
    adv_sum += n * adversarial_loss(live, s, adv.r, labels).value().item();
    const Perturbation va = virtual_adversarial_perturbation(frozen, s.value(), batch.mask, vat, rng);
    vadv_sum += n * virtual_adversarial_loss(live, s, va.r, &logits).value().item();
  }
  const double total = static_cast<double>(data.size());
  return {nll_sum / total, static_cast<double>(errors) / total, adv_sum / total, vadv_sum / total};
}

double evaluate_lm(const Model& model, std::span<const Sequence> data, std::size_t batch_size) {
  if (data.empty()) throw DataError("nothing to evaluate");
  double weighted = 0.0, tokens = 0.0;
  RngStream unused(0);
  for (const Batch& batch : ordered_batches(data, batch_size, pad_id(model))) {
    Graph g;
    const BoundModel bound(g, model, Binding::kFrozen);
    const Var s = embed_batch(bound, batch, 0.0, unused, false);
    double real = 0.0;
    for (double m : batch.mask.data()) real += m;
    weighted += real * lm_loss(bound, s, batch).value().item();
    tokens += real;
  }
  return weighted / tokens;
}

TrainResult pretrain_lm(const Model& init, std::uint64_t vocab_fingerprint, std::span<const Sequence> corpus,
                        const TrainConfig& config) {
  config.validate();
  if (corpus.empty()) throw DataError("pretraining corpus is empty");
  if (!init.has_lm()) throw ConfigError("pretraining needs a model with language-model heads");
  TrainResult result{Checkpoint{init, fresh_optimizer(config), vocab_fingerprint, 0}, {}, {}};
  Model& model = result.checkpoint.model;
  const RngStream root(config.seed);
  BatchStream stream(corpus, config.batch_size, pad_id(model), root.split("lm-batches"));
  RngStream noise = root.split("lm-noise");
  for (std::size_t step = 0; step < config.steps; ++step) {
    try {
      const Batch batch = stream.next();
      Graph g;
      const BoundModel bound(g, model, Binding::kTrainable);
      const Var loss = lm_loss(bound, embed_batch(bound, batch, config.dropout, noise, true), batch);
      GradientSet grads = collect_gradients(bound, g.backward(loss));
      clip_gradients(grads, config.clip_norm);
      adam_step(model.params, grads, result.checkpoint.optimizer);
      result.losses.push_back(loss.value().item());
    } catch (const NumericalError& e) {
      throw TrainingDiverged("language-model pretraining diverged at step " + std::to_string(step) + ": " + e.what(),
                             result.checkpoint);
    }
    result.checkpoint.step = step + 1;
  }
  return result;
}

TrainResult train_classifier(const Model& init, std::uint64_t vocab_fingerprint, std::span<const Sequence> labeled,
                             std::span<const Sequence> unlabeled, std::span<const Sequence> test,
                             const TrainConfig& config) {
  config.validate();
  if (labeled.empty()) throw DataError("no labeled training data");
  if (!init.has_classifier()) throw ConfigError("classifier training needs a model with a classifier head");
  const PerturbationKind kind = config.perturbation.kind;
  const bool needs_pool = uses_unlabeled_perturbation(kind);
  if (needs_pool && unlabeled.empty()) {
    throw ConfigError("method '" + std::string(method_name(kind)) + "' needs unlabeled data");
  }

  TrainResult result{Checkpoint{init, fresh_optimizer(config), vocab_fingerprint, 0}, {}, {}};
  Model& model = result.checkpoint.model;
  const std::size_t pad = pad_id(model);
  const RngStream root(config.seed);

  std::vector<Sequence> pool;
  if (needs_pool) {
    pool.reserve(labeled.size() + unlabeled.size());
    for (const Sequence& s : labeled) pool.push_back(Sequence{s.token_ids, std::nullopt});
    for (const Sequence& s : unlabeled) pool.push_back(Sequence{s.token_ids, std::nullopt});
  }
  BatchStream labeled_stream(labeled, config.batch_size, pad, root.split("labeled"));
  std::optional<BatchStream> pool_stream;
  if (needs_pool) pool_stream.emplace(pool, config.unlabeled_batch_size, pad, root.split("unlabeled"));
  RngStream noise = root.split("noise");

  auto log_metrics = [&](std::uint64_t step) {
    const std::uint64_t eval_seed = root.split("eval").seed();
    auto add = [&](const char* split, std::span<const Sequence> data) {
      const Evaluation e = evaluate_classifier(model, data, config.diagnostic_epsilon, config.perturbation.xi,
                                               config.eval_batch_size, eval_seed);
      result.metrics.push_back(MetricRow{step, split, e.nll, e.error_rate, e.l_adv, e.l_vadv});
    };
    add("train", labeled);
    if (!test.empty()) add("test", test);
  };

  for (std::size_t step = 0; step < config.steps; ++step) {
    try {
      if (step % config.eval_every == 0) log_metrics(step);
      const Batch batch = labeled_stream.next();
      std::optional<Batch> extra;
      if (pool_stream) extra = pool_stream->next();
      Graph g;
      const BoundModel bound(g, model, Binding::kTrainable);
      const StepLosses losses =
          classifier_objective(model, bound, batch, extra ? &*extra : nullptr, config, noise);
      GradientSet grads = collect_gradients(bound, g.backward(losses.total));
      clip_gradients(grads, config.clip_norm);
      adam_step(model.params, grads, result.checkpoint.optimizer);
      result.losses.push_back(losses.total.value().item());
    } catch (const NumericalError& e) {
      throw TrainingDiverged("classifier training diverged at step " + std::to_string(step) + ": " + e.what(),
                             result.checkpoint);
    }
    result.checkpoint.step = step + 1;
  }
  log_metrics(config.steps);
  return result;
}

}  // namespace advt
