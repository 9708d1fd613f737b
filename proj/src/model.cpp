// SPDX-License-Identifier: Apache-2.0
#include "advt/model.hpp"

#include <sstream>

#include "advt/embedding.hpp"
#include "advt/errors.hpp"

namespace advt {

namespace {

constexpr double kInitRange = 0.08;

Tensor uniform_init(Shape shape, RngStream& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * kInitRange;
  return t;
}

void add_lstm(ParamSet& params, const ModelConfig& cfg, const char* direction, RngStream& rng) {
  const std::size_t h = cfg.hidden_dim;
  params[param::lstm(direction, "w_input")] = uniform_init({cfg.embedding_dim, 4 * h}, rng);
  params[param::lstm(direction, "w_hidden")] = uniform_init({h, 4 * h}, rng);
  Tensor bias(Shape{4 * h}, 0.0);
  for (std::size_t j = h; j < 2 * h; ++j) bias[j] = 1.0;  // forget gate
  params[param::lstm(direction, "bias")] = std::move(bias);
}

void add_classifier(ParamSet& params, const ModelConfig& cfg, RngStream& rng) {
  params[param::kClassifierHiddenW] = uniform_init({cfg.feature_dim(), cfg.classifier_hidden}, rng);
  params[param::kClassifierHiddenB] = Tensor(Shape{cfg.classifier_hidden}, 0.0);
  params[param::kClassifierOutW] = uniform_init({cfg.classifier_hidden, cfg.num_classes}, rng);
  params[param::kClassifierOutB] = Tensor(Shape{cfg.num_classes}, 0.0);
}

void add_lm(ParamSet& params, const ModelConfig& cfg, const char* direction, RngStream& rng) {
  params[param::lm(direction, "w")] = uniform_init({cfg.hidden_dim, cfg.vocab_rows}, rng);
  params[param::lm(direction, "b")] = Tensor(Shape{cfg.vocab_rows}, 0.0);
}

void check_lengths(std::span<const std::size_t> lengths, const Shape& s_shape) {
  if (s_shape.size() != 3 || s_shape[0] != lengths.size()) {
    throw ShapeError("expected embedded batch [B, T, D] with " + std::to_string(lengths.size()) + " rows, got " +
                     shape_string(s_shape));
  }
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    if (lengths[b] == 0) throw DataError("example " + std::to_string(b) + " has no unmasked timesteps");
    if (lengths[b] > s_shape[1]) throw ShapeError("example length exceeds padded length");
  }
}

struct LstmRun {
  std::vector<Var> hidden;  // per step, [B, H]
  LstmState final;
};

LstmRun run(const LstmWeights& w, Var s, std::span<const std::size_t> lengths) {
  check_lengths(lengths, s.shape());
  Graph& g = *s.graph;
  const std::size_t batch = s.shape()[0], steps = s.shape()[1], dim = s.shape()[2];
  const std::size_t hidden = w.w_hidden.shape()[0];
  LstmRun out{{}, zero_state(g, batch, hidden)};
  std::vector<char> keep(batch);
  for (std::size_t t = 0; t < steps; ++t) {
    bool all = true;
    for (std::size_t b = 0; b < batch; ++b) {
      keep[b] = t < lengths[b];
      all = all && keep[b];
    }
    const Var x = reshape(slice(s, 1, t, t + 1), {batch, dim});
    out.final = all ? lstm_step(w, x, out.final) : lstm_step_masked(w, x, out.final, keep);
    out.hidden.push_back(out.final.h);
  }
  return out;
}

Var one_hot_weights(Graph& g, std::size_t rows, std::size_t cols, std::span<const std::size_t> targets,
                    std::span<const double> row_weights) {
  Tensor w(Shape{rows, cols}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_weights[r] == 0.0) continue;
    if (targets[r] >= cols) throw std::out_of_range("target " + std::to_string(targets[r]) + " outside class range");
    w.at(r, targets[r]) = row_weights[r];
  }
  return g.constant(std::move(w));
}

}  // namespace

std::string ModelConfig::describe() const {
  std::ostringstream ss;
  ss << "vocab_rows=" << vocab_rows << ";embedding_dim=" << embedding_dim << ";hidden_dim=" << hidden_dim
     << ";classifier_hidden=" << classifier_hidden << ";num_classes=" << num_classes
     << ";bidirectional=" << (bidirectional ? 1 : 0);
  return ss.str();
}

namespace param {
std::string lstm(const char* direction, const char* part) { return std::string("lstm.") + direction + "." + part; }
std::string lm(const char* direction, const char* part) { return std::string("lm.") + direction + "." + part; }
bool is_classifier(const std::string& name) { return name.starts_with("classifier."); }
bool is_lm(const std::string& name) { return name.starts_with("lm."); }
}  // namespace param

Model init_model(const ModelConfig& config, std::vector<double> frequencies, RngStream& rng, bool classifier_head,
                 bool lm_heads) {
  if (config.vocab_rows < 2 || frequencies.size() + 1 != config.vocab_rows) {
    throw ShapeError("model vocabulary rows must equal the number of word frequencies plus eos");
  }
  Model model{config, {}, std::move(frequencies)};
  Tensor emb(Shape{config.vocab_rows, config.embedding_dim});
  for (double& v : emb.data()) v = rng.normal();
  model.params[param::kEmbedding] = std::move(emb);
  add_lstm(model.params, config, param::kForward, rng);
  if (config.bidirectional) add_lstm(model.params, config, param::kBackward, rng);
  if (classifier_head) add_classifier(model.params, config, rng);
  if (lm_heads) {
    add_lm(model.params, config, param::kForward, rng);
    if (config.bidirectional) add_lm(model.params, config, param::kBackward, rng);
  }
  return model;
}

Model to_classifier(const Model& pretrained, std::size_t num_classes, std::size_t classifier_hidden, RngStream& rng) {
  Model model = pretrained;
  std::erase_if(model.params, [](const auto& kv) { return param::is_lm(kv.first) || param::is_classifier(kv.first); });
  model.config.num_classes = num_classes;
  model.config.classifier_hidden = classifier_hidden;
  add_classifier(model.params, model.config, rng);
  return model;
}

BoundModel::BoundModel(Graph& graph, const Model& model, Binding binding) : graph_(&graph), model_(&model) {
  for (const auto& [name, value] : model.params) {
    vars_.emplace(name, binding == Binding::kTrainable ? graph.parameter(value) : graph.constant(value));
  }
}

BoundModel::BoundModel(Graph& graph, const Model& model, std::map<std::string, Var> vars)
    : graph_(&graph), model_(&model), vars_(std::move(vars)) {
  for (const auto& [name, value] : model.params) {
    auto it = vars_.find(name);
    if (it == vars_.end() || it->second.graph != &graph || it->second.shape() != value.shape()) {
      throw ShapeError("bound parameter '" + name + "' is missing or misshapen");
    }
  }
}

Var BoundModel::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("model has no parameter '" + name + "'");
  return it->second;
}

Var normalized_embeddings(const BoundModel& model) {
  return normalize_embeddings(model[param::kEmbedding], model.frequencies());
}

Var embed_batch(const BoundModel& model, const Batch& batch, double dropout_rate, RngStream& rng, bool training) {
  return embedding_dropout(embed(batch, normalized_embeddings(model)), dropout_rate, rng, training);
}

LstmWeights lstm_weights(const BoundModel& model, const char* direction) {
  return {model[param::lstm(direction, "w_input")], model[param::lstm(direction, "w_hidden")],
          model[param::lstm(direction, "bias")]};
}

LstmState zero_state(Graph& graph, std::size_t batch, std::size_t hidden) {
  const Var zeros = graph.constant(Tensor(Shape{batch, hidden}, 0.0));
  return {zeros, zeros};
}

LstmState lstm_step(const LstmWeights& w, Var x, const LstmState& state) {
  const std::size_t h = w.w_hidden.shape()[0];
  if (x.shape().size() != 2 || x.shape()[1] != w.w_input.shape()[0] || state.h.shape() != Shape{x.shape()[0], h}) {
    throw ShapeError("lstm_step: input " + shape_string(x.shape()) + " or state " + shape_string(state.h.shape()) +
                     " does not fit weights " + shape_string(w.w_input.shape()));
  }
  const Var gates = matmul(x, w.w_input) + matmul(state.h, w.w_hidden) + w.bias;
  const Var input = sigmoid(slice(gates, 1, 0, h));
  const Var forget = sigmoid(slice(gates, 1, h, 2 * h));
  const Var cell = tanh(slice(gates, 1, 2 * h, 3 * h));
  const Var output = sigmoid(slice(gates, 1, 3 * h, 4 * h));
  const Var c = forget * state.c + input * cell;
  return {output * tanh(c), c};
}

LstmState lstm_step_masked(const LstmWeights& w, Var x, const LstmState& state, std::span<const char> keep) {
  const LstmState next = lstm_step(w, x, state);
  return {where_rows(keep, next.h, state.h), where_rows(keep, next.c, state.c)};
}

Var run_lstm(const LstmWeights& w, Var s, std::span<const std::size_t> lengths) {
  const LstmRun r = run(w, s, lengths);
  const std::size_t batch = s.shape()[0], hidden = w.w_hidden.shape()[0];
  std::vector<Var> steps;
  for (const Var& h : r.hidden) steps.push_back(reshape(h, {batch, 1, hidden}));
  return concat(steps, 1);
}

std::vector<std::size_t> reversal_index(std::span<const std::size_t> lengths, std::size_t max_length) {
  std::vector<std::size_t> index(lengths.size() * max_length);
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    for (std::size_t t = 0; t < max_length; ++t) {
      index[b * max_length + t] = t < lengths[b] ? lengths[b] - 1 - t : t;
    }
  }
  return index;
}

Var encode_sequence(const BoundModel& model, Var s, std::span<const std::size_t> lengths) {
  const Var forward = run(lstm_weights(model, param::kForward), s, lengths).final.h;
  if (!model.config().bidirectional) return forward;
  const Var reversed = gather_time(s, reversal_index(lengths, s.shape()[1]));
  const Var backward = run(lstm_weights(model, param::kBackward), reversed, lengths).final.h;
  const Var parts[] = {forward, backward};
  return concat(parts, 1);
}

Var classifier_logits(const BoundModel& model, Var s, std::span<const std::size_t> lengths) {
  const Var feature = encode_sequence(model, s, lengths);
  const Var hidden = relu(matmul(feature, model[param::kClassifierHiddenW]) + model[param::kClassifierHiddenB]);
  return matmul(hidden, model[param::kClassifierOutW]) + model[param::kClassifierOutB];
}

Var nll(Var log_probs, std::span<const std::size_t> labels) {
  const Shape& shape = log_probs.shape();
  if (shape.size() != 2 || shape[0] != labels.size() || labels.empty()) {
    throw ShapeError("nll: log-probabilities " + shape_string(shape) + " for " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::vector<double> row_weights(labels.size(), 1.0 / static_cast<double>(labels.size()));
  return -sum(log_probs * one_hot_weights(*log_probs.graph, shape[0], shape[1], labels, row_weights));
}

Var lm_logits(const BoundModel& model, Var s, std::span<const std::size_t> lengths, const char* direction) {
  const bool backward = std::string_view(direction) == param::kBackward;
  const Var input = backward ? gather_time(s, reversal_index(lengths, s.shape()[1])) : s;
  const Var states = run_lstm(lstm_weights(model, direction), input, lengths);
  const std::size_t rows = s.shape()[0] * s.shape()[1];
  const Var flat = reshape(states, {rows, model.config().hidden_dim});
  return matmul(flat, model[param::lm(direction, "w")]) + model[param::lm(direction, "b")];
}

std::vector<std::size_t> lm_targets(const Batch& batch, std::size_t eos_id, const char* direction) {
  const bool backward = std::string_view(direction) == param::kBackward;
  const std::size_t steps = batch.max_length;
  std::vector<std::size_t> targets(batch.batch_size * steps, eos_id);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    const std::size_t len = batch.lengths[b];
    const std::size_t* row = batch.token_ids.data() + b * steps;
    for (std::size_t t = 0; t + 1 < len; ++t) {
      targets[b * steps + t] = backward ? row[len - 2 - t] : row[t + 1];
    }
  }
  return targets;
}

Var lm_direction_loss(const BoundModel& model, Var s, const Batch& batch, const char* direction) {
  const Var log_probs = log_softmax(lm_logits(model, s, batch.lengths, direction));
  const std::vector<std::size_t> targets = lm_targets(batch, model.config().vocab_rows - 1, direction);
  double real = 0.0;
  for (double m : batch.mask.data()) real += m;
  std::vector<double> row_weights(batch.mask.size());
  for (std::size_t i = 0; i < row_weights.size(); ++i) row_weights[i] = batch.mask[i] / real;
  const Shape& shape = log_probs.shape();
  return -sum(log_probs * one_hot_weights(*s.graph, shape[0], shape[1], targets, row_weights));
}

Var lm_loss(const BoundModel& model, Var s, const Batch& batch) {
  Var loss = lm_direction_loss(model, s, batch, param::kForward);
  if (model.config().bidirectional && model.contains(param::lm(param::kBackward, "w"))) {
    loss = loss + lm_direction_loss(model, s, batch, param::kBackward);
  }
  return loss;
}

}  // namespace advt
