// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "advt/graph.hpp"
#include "advt/rng.hpp"
#include "advt/text.hpp"

namespace advt {

struct ModelConfig {
  std::size_t vocab_rows = 0;  // K + 1, eos row included
  std::size_t embedding_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t classifier_hidden = 30;
  std::size_t num_classes = 2;
  bool bidirectional = false;

  std::size_t feature_dim() const noexcept { return bidirectional ? 2 * hidden_dim : hidden_dim; }
  /// Stable text form, hashed into checkpoint fingerprints.
  std::string describe() const;
};

/// Named parameter tensors, iterated in name order.
using ParamSet = std::map<std::string, Tensor>;

namespace param {
inline constexpr const char* kEmbedding = "embedding";
inline constexpr const char* kForward = "fw";
inline constexpr const char* kBackward = "bw";
std::string lstm(const char* direction, const char* part);  // part: w_input | w_hidden | bias
std::string lm(const char* direction, const char* part);    // part: w | b
inline constexpr const char* kClassifierHiddenW = "classifier.w_hidden";
inline constexpr const char* kClassifierHiddenB = "classifier.b_hidden";
inline constexpr const char* kClassifierOutW = "classifier.w_out";
inline constexpr const char* kClassifierOutB = "classifier.b_out";
bool is_classifier(const std::string& name);
bool is_lm(const std::string& name);
}  // namespace param

/// Model parameters plus their architecture. The classifier head and the
/// language-model heads are optional: pretraining carries LM heads, the
/// classifier carries the hidden ReLU layer and softmax layer.
struct Model {
  ModelConfig config;
  ParamSet params;
  /// Training-corpus word frequencies f_0..f_{K-1} driving the embedding
  /// normalization.
  std::vector<double> frequencies;

  bool has_classifier() const { return params.contains(param::kClassifierOutW); }
  bool has_lm() const { return params.contains(param::lm(param::kForward, "w")); }
};

/// Weights ~ Uniform(-0.08, 0.08), forget-gate bias 1, other biases 0,
/// embeddings ~ N(0, 1). `frequencies` must have vocab_rows - 1 entries.
Model init_model(const ModelConfig& config, std::vector<double> frequencies, RngStream& rng, bool classifier_head,
                 bool lm_heads);

/// Adds a freshly initialized classifier head and drops LM heads.
Model to_classifier(const Model& pretrained, std::size_t num_classes, std::size_t classifier_hidden, RngStream& rng);

enum class Binding {
  kTrainable,  // parameters become differentiable leaves
  kFrozen,     // parameters become constants: the gradient-free copy of theta
};

/// A Model's parameters bound into one graph.
class BoundModel {
 public:
  BoundModel(Graph& graph, const Model& model, Binding binding);
  /// Uses caller-provided nodes, one per parameter name of `model`.
  BoundModel(Graph& graph, const Model& model, std::map<std::string, Var> vars);

  const ModelConfig& config() const noexcept { return model_->config; }
  std::span<const double> frequencies() const noexcept { return model_->frequencies; }
  Graph& graph() const noexcept { return *graph_; }
  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.contains(name); }
  const std::map<std::string, Var>& vars() const noexcept { return vars_; }

 private:
  Graph* graph_;
  const Model* model_;
  std::map<std::string, Var> vars_;
};

/// Normalized embedding matrix of a bound model.
Var normalized_embeddings(const BoundModel& model);

/// normalize -> lookup -> embedding dropout, giving s = [B, T, D].
Var embed_batch(const BoundModel& model, const Batch& batch, double dropout_rate, RngStream& rng, bool training);

struct LstmWeights {
  Var w_input;   // [D, 4H], gate blocks ordered input, forget, cell, output
  Var w_hidden;  // [H, 4H]
  Var bias;      // [4H]
};

struct LstmState {
  Var h;  // [B, H]
  Var c;  // [B, H]
};

LstmWeights lstm_weights(const BoundModel& model, const char* direction);
LstmState zero_state(Graph& graph, std::size_t batch, std::size_t hidden);

/// One LSTM step without peepholes:
///   i, f, o = sigmoid(.), g = tanh(.), c' = f*c + i*g, h' = o*tanh(c').
LstmState lstm_step(const LstmWeights& w, Var x, const LstmState& state);

/// Same as lstm_step, except rows with keep[b] == 0 carry `state` through
/// unchanged.
LstmState lstm_step_masked(const LstmWeights& w, Var x, const LstmState& state, std::span<const char> keep);

/// Runs an LSTM over s = [B, T, D] honoring per-example lengths. Returns the
/// hidden state after every step, [B, T, H]; rows past an example's length
/// repeat its last real state.
Var run_lstm(const LstmWeights& w, Var s, std::span<const std::size_t> lengths);

/// Step index that reverses each row within its length; padding stays put.
std::vector<std::size_t> reversal_index(std::span<const std::size_t> lengths, std::size_t max_length);

/// Final feature per example: the last real hidden state (unidirectional), or
/// that of the forward LSTM concatenated with that of an LSTM reading the
/// sequence reversed within its length (bidirectional). [B, H] or [B, 2H].
Var encode_sequence(const BoundModel& model, Var s, std::span<const std::size_t> lengths);

/// Class logits W2 relu(W1 feature + b1) + b2, [B, C].
Var classifier_logits(const BoundModel& model, Var s, std::span<const std::size_t> lengths);

/// log p(y | s), [B, C].
inline Var classify(const BoundModel& model, Var s, std::span<const std::size_t> lengths) {
  return log_softmax(classifier_logits(model, s, lengths));
}

/// -(1/N) sum_n log_probs[n, labels[n]].
Var nll(Var log_probs, std::span<const std::size_t> labels);

/// Per-position vocabulary logits of one LM direction, [B*T, K+1] in row
/// order (b, t). Position t predicts the next token; the last real position
/// predicts eos.
Var lm_logits(const BoundModel& model, Var s, std::span<const std::size_t> lengths, const char* direction = "fw");

/// Next-token targets matching lm_logits for a batch read in the given
/// direction.
std::vector<std::size_t> lm_targets(const Batch& batch, std::size_t eos_id, const char* direction = "fw");

/// Mean next-token cross-entropy over real positions, summed over the LM
/// directions present in the model.
Var lm_loss(const BoundModel& model, Var s, const Batch& batch);

/// Cross-entropy of one direction, averaged over real positions.
Var lm_direction_loss(const BoundModel& model, Var s, const Batch& batch, const char* direction);

}  // namespace advt
