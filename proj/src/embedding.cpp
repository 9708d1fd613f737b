// SPDX-License-Identifier: Apache-2.0
#include "advt/embedding.hpp"

#include "advt/errors.hpp"

namespace advt {

Var normalize_embeddings(Var embeddings, std::span<const double> frequencies, double delta) {
  const Shape& shape = embeddings.shape();
  if (shape.size() != 2 || shape[0] != frequencies.size() + 1) {
    throw ShapeError("normalize_embeddings: matrix " + shape_string(shape) + " does not fit " +
                     std::to_string(frequencies.size()) + " word frequencies plus eos");
  }
  const std::size_t words = frequencies.size();
  Graph& g = *embeddings.graph;
  const Var weights = g.constant(Tensor(Shape{1, words}, std::vector<double>(frequencies.begin(), frequencies.end())));
  const Var mean = matmul(weights, slice(embeddings, 0, 0, words));
  const Var centered = embeddings - mean;
  const Var variance = matmul(weights, square(slice(centered, 0, 0, words)));
  return centered / sqrt(clamp_min(variance, delta));
}

Tensor normalize_embeddings(const Tensor& embeddings, std::span<const double> frequencies, double delta) {
  Graph g;
  return normalize_embeddings(g.constant(embeddings), frequencies, delta).value();
}

Var embed(const Batch& batch, Var normalized) {
  const Shape& shape = normalized.shape();
  if (shape.size() != 2) throw ShapeError("embed: expected a matrix, got " + shape_string(shape));
  const std::size_t width = shape[1];
  const Var rows = gather_rows(normalized, batch.token_ids);
  std::vector<char> real(batch.token_ids.size());
  for (std::size_t i = 0; i < real.size(); ++i) real[i] = batch.mask[i] != 0.0;
  const Var zeros = normalized.graph->constant(Tensor(rows.shape(), 0.0));
  return reshape(where_rows(real, rows, zeros), {batch.batch_size, batch.max_length, width});
}

}  // namespace advt
