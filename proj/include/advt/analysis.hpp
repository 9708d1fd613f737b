// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advt/model.hpp"
#include "advt/text.hpp"

namespace advt {

/// 1 - u.v / (|u| |v|); 1 when either vector is zero.
double cosine_distance(std::span<const double> u, std::span<const double> v);

struct Neighbor {
  std::size_t id = 0;
  std::string token;
  double distance = 0.0;
};

struct NeighborReport {
  std::string query;
  std::vector<Neighbor> neighbors;  // ascending distance, ties by id
};

/// Normalized embedding matrix of a model, [K+1, D].
Tensor normalized_embedding_table(const Model& model);

/// The k word rows closest to `query` by cosine distance. Candidates are all
/// words except the query, unk and eos. Throws DataError for an unknown
/// query and std::invalid_argument when k exceeds the candidate count.
NeighborReport nearest_neighbors(const Tensor& table, const Vocabulary& vocab, std::string_view query, std::size_t k);
NeighborReport nearest_neighbors(const Model& model, const Vocabulary& vocab, std::string_view query, std::size_t k);

struct RankResult {
  std::size_t rank = 0;  // 1-based
  double distance = 0.0;
};

/// Position of `target` in the full neighbor list of `query`.
RankResult rank_of(const Tensor& table, const Vocabulary& vocab, std::string_view query, std::string_view target);
RankResult rank_of(const Model& model, const Vocabulary& vocab, std::string_view query, std::string_view target);

/// A metric log parsed without reinterpreting its values.
struct MetricLog {
  std::string run;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

/// Checks that every metric-log column is present; throws DataError naming
/// the file and the problem otherwise.
MetricLog parse_metric_log(std::string_view content, std::string run);
MetricLog read_metric_log(const std::filesystem::path& path);

/// Long-format series "run,split,metric,step,value": one series per (run,
/// split, metric), values copied verbatim. Runs are named by file stem.
std::string learning_curves(std::span<const MetricLog> logs);
void emit_learning_curves(std::span<const std::filesystem::path> metric_logs, const std::filesystem::path& out);

}  // namespace advt
