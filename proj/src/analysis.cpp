// SPDX-License-Identifier: Apache-2.0
#include "advt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "advt/embedding.hpp"
#include "advt/errors.hpp"

namespace advt {

namespace {

constexpr std::string_view kMetricColumns[] = {"step", "split", "nll", "error_rate", "l_adv", "l_vadv"};
constexpr std::string_view kSeriesColumns[] = {"nll", "error_rate", "l_adv", "l_vadv"};

std::size_t word_id(const Vocabulary& vocab, std::string_view token) {
  const auto id = vocab.find(token);
  if (!id || *id == vocab.unk_id()) throw DataError("'" + std::string(token) + "' is not in the vocabulary");
  return *id;
}

std::vector<Neighbor> ranked(const Tensor& table, const Vocabulary& vocab, std::size_t query) {
  if (table.rank() != 2 || table.dim(0) != vocab.rows()) {
    throw ShapeError("embedding table " + shape_string(table.shape()) + " does not match the vocabulary");
  }
  const std::size_t dim = table.dim(1);
  const auto row = [&](std::size_t id) { return table.data().subspan(id * dim, dim); };
  std::vector<Neighbor> out;
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (id == query || id == vocab.unk_id()) continue;
    out.push_back(Neighbor{id, std::string(vocab.token(id)), cosine_distance(row(query), row(id))});
  }
  std::stable_sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; });
  return out;
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  const double nu = l2_norm(u), nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) return 1.0;
  return 1.0 - dot(u, v) / (nu * nv);
}

Tensor normalized_embedding_table(const Model& model) {
  return normalize_embeddings(model.params.at(param::kEmbedding), model.frequencies);
}

NeighborReport nearest_neighbors(const Tensor& table, const Vocabulary& vocab, std::string_view query, std::size_t k) {
  std::vector<Neighbor> all = ranked(table, vocab, word_id(vocab, query));
  if (k > all.size()) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the " + std::to_string(all.size()) +
                                " candidate words");
  }
  all.resize(k);
  return NeighborReport{std::string(query), std::move(all)};
}

NeighborReport nearest_neighbors(const Model& model, const Vocabulary& vocab, std::string_view query, std::size_t k) {
  return nearest_neighbors(normalized_embedding_table(model), vocab, query, k);
}

RankResult rank_of(const Tensor& table, const Vocabulary& vocab, std::string_view query, std::string_view target) {
  const std::size_t q = word_id(vocab, query), t = word_id(vocab, target);
  if (q == t) throw std::invalid_argument("query and target are the same word");
  const std::vector<Neighbor> all = ranked(table, vocab, q);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].id == t) return RankResult{i + 1, all[i].distance};
  }
  throw DataError("target not among the neighbor candidates");
}

RankResult rank_of(const Model& model, const Vocabulary& vocab, std::string_view query, std::string_view target) {
  return rank_of(normalized_embedding_table(model), vocab, query, target);
}

MetricLog parse_metric_log(std::string_view content, std::string run) {
  MetricLog log{std::move(run), {}, {}};
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_fields(line);
    if (log.columns.empty()) {
      log.columns = std::move(fields);
      for (std::string_view c : kMetricColumns) {
        if (std::find(log.columns.begin(), log.columns.end(), c) == log.columns.end()) {
          throw DataError("metric log '" + log.run + "': missing column '" + std::string(c) + "'");
        }
      }
      continue;
    }
    if (fields.size() != log.columns.size()) {
      throw DataError("metric log '" + log.run + "' line " + std::to_string(line_no) + ": expected " +
                      std::to_string(log.columns.size()) + " fields, got " + std::to_string(fields.size()));
    }
    log.rows.push_back(std::move(fields));
  }
  if (log.columns.empty()) throw DataError("metric log '" + log.run + "' is empty");
  return log;
}

MetricLog read_metric_log(const std::filesystem::path& path) {
  return parse_metric_log(read_file(path), path.stem().string());
}

std::string learning_curves(std::span<const MetricLog> logs) {
  std::string out = "run,split,metric,step,value\n";
  for (const MetricLog& log : logs) {
    const auto column = [&](std::string_view name) {
      return static_cast<std::size_t>(std::find(log.columns.begin(), log.columns.end(), name) - log.columns.begin());
    };
    const std::size_t step = column("step"), split = column("split");
    // Splits in order of first appearance.
    std::vector<std::string> splits;
    for (const auto& row : log.rows) {
      if (std::find(splits.begin(), splits.end(), row[split]) == splits.end()) splits.push_back(row[split]);
    }
    for (const std::string& s : splits) {
      for (std::string_view metric : kSeriesColumns) {
        const std::size_t m = column(metric);
        for (const auto& row : log.rows) {
          if (row[split] != s) continue;
          out += log.run + "," + s + "," + std::string(metric) + "," + row[step] + "," + row[m] + "\n";
        }
      }
    }
  }
  return out;
}

void emit_learning_curves(std::span<const std::filesystem::path> metric_logs, const std::filesystem::path& out) {
  if (metric_logs.empty()) throw DataError("no metric logs given");
  std::vector<MetricLog> logs;
  for (const auto& path : metric_logs) logs.push_back(read_metric_log(path));
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("cannot write " + out.string());
  file << learning_curves(logs);
  if (!file) throw DataError("failed writing " + out.string());
}

}  // namespace advt
