// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string_view>

#include "advt/model.hpp"
#include "advt/trainer.hpp"

namespace advt {

struct DataConfig {
  std::size_t max_length = 400;  // tokens kept per sequence, eos included
  std::size_t min_doc_count = 2;
  bool lowercase = true;
};

/// Everything a CLI run reads from its TOML file. Tables and keys:
///   [model]        embedding_dim, hidden_dim, classifier_hidden, bidirectional
///   [data]         max_length, min_doc_count, lowercase
///   [train]        steps, batch_size, unlabeled_batch_size, clip_norm, dropout,
///                  learning_rate, lr_decay, seed, eval_every, eval_batch_size,
///                  diagnostic_epsilon
///   [perturbation] method, epsilon, xi
/// Missing keys keep their defaults; unknown tables or keys are errors.
struct RunConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;
};

RunConfig parse_config(std::string_view toml_text, std::string_view source = "config");
RunConfig load_config(const std::filesystem::path& path);

}  // namespace advt
