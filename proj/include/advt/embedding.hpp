// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "advt/graph.hpp"
#include "advt/text.hpp"

namespace advt {

/// Lower bound on the per-dimension variance under the square root, so
/// constant columns normalize to zero instead of dividing by zero. Columns
/// with larger variance are standardized exactly.
inline constexpr double kVarianceFloor = 1e-6;

/// Frequency-weighted standardization of an embedding matrix.
///
/// `embeddings` is [K+1, D] with the eos row last; `frequencies` has K
/// entries. Per dimension d:
///   mean_d = sum_j f_j V[j,d]
///   var_d  = sum_j f_j (V[j,d] - mean_d)^2
///   out[k,d] = (V[k,d] - mean_d) / sqrt(max(var_d, delta))
/// with j over the K word rows only. The eos row is standardized with the
/// same moments. Gradients reach V through the moments as well.
Var normalize_embeddings(Var embeddings, std::span<const double> frequencies, double delta = kVarianceFloor);

/// Value-only form of normalize_embeddings.
Tensor normalize_embeddings(const Tensor& embeddings, std::span<const double> frequencies,
                            double delta = kVarianceFloor);

/// Looks up rows of the normalized matrix for every batch position.
/// Returns [B, T, D] with exact zero vectors at padded positions.
Var embed(const Batch& batch, Var normalized);

/// Per-coordinate inverted dropout on an embedded batch.
inline Var embedding_dropout(Var embedded, double rate, RngStream& rng, bool training) {
  return dropout(embedded, rate, rng, training);
}

}  // namespace advt
