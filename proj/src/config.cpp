// SPDX-License-Identifier: Apache-2.0
#include "advt/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "toml.hpp"

namespace advt {

namespace {

using Setter = std::function<void(const toml::node&, const std::string& where)>;

std::size_t as_count(const toml::node& node, const std::string& where) {
  const auto v = node.value<std::int64_t>();
  if (!v || *v < 0 || !node.is_integer()) throw ConfigError(where + " must be a non-negative integer");
  return static_cast<std::size_t>(*v);
}

double as_real(const toml::node& node, const std::string& where) {
  if (!node.is_number()) throw ConfigError(where + " must be a number");
  return *node.value<double>();
}

bool as_flag(const toml::node& node, const std::string& where) {
  if (!node.is_boolean()) throw ConfigError(where + " must be true or false");
  return *node.value<bool>();
}

Setter count(std::size_t& field) {
  return [&field](const toml::node& n, const std::string& w) { field = as_count(n, w); };
}
Setter real(double& field) {
  return [&field](const toml::node& n, const std::string& w) { field = as_real(n, w); };
}
Setter flag(bool& field) {
  return [&field](const toml::node& n, const std::string& w) { field = as_flag(n, w); };
}

}  // namespace

RunConfig parse_config(std::string_view toml_text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream ss;
    ss << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(ss.str());
  }

  RunConfig cfg;
  std::map<std::string, std::map<std::string, Setter>> schema;
  schema["model"] = {{"embedding_dim", count(cfg.model.embedding_dim)},
                     {"hidden_dim", count(cfg.model.hidden_dim)},
                     {"classifier_hidden", count(cfg.model.classifier_hidden)},
                     {"bidirectional", flag(cfg.model.bidirectional)}};
  schema["data"] = {{"max_length", count(cfg.data.max_length)},
                    {"min_doc_count", count(cfg.data.min_doc_count)},
                    {"lowercase", flag(cfg.data.lowercase)}};
  schema["train"] = {{"steps", count(cfg.train.steps)},
                     {"batch_size", count(cfg.train.batch_size)},
                     {"unlabeled_batch_size", count(cfg.train.unlabeled_batch_size)},
                     {"clip_norm", real(cfg.train.clip_norm)},
                     {"dropout", real(cfg.train.dropout)},
                     {"learning_rate", real(cfg.train.learning_rate)},
                     {"lr_decay", real(cfg.train.lr_decay)},
                     {"seed",
                      [&](const toml::node& n, const std::string& w) { cfg.train.seed = as_count(n, w); }},
                     {"eval_every", count(cfg.train.eval_every)},
                     {"eval_batch_size", count(cfg.train.eval_batch_size)},
                     {"diagnostic_epsilon", real(cfg.train.diagnostic_epsilon)}};
  schema["perturbation"] = {{"epsilon", real(cfg.train.perturbation.epsilon)},
                            {"xi", real(cfg.train.perturbation.xi)},
                            {"method", [&](const toml::node& n, const std::string& w) {
                               if (!n.is_string()) throw ConfigError(w + " must be a string");
                               cfg.train.perturbation.kind = parse_method(*n.value<std::string>());
                             }}};

  for (const auto& [table_key, table_node] : root) {
    const std::string table_name(table_key.str());
    const auto table_it = schema.find(table_name);
    if (table_it == schema.end() || !table_node.is_table()) {
      throw ConfigError(std::string(source) + ": unknown table [" + table_name + "]");
    }
    for (const auto& [key, node] : *table_node.as_table()) {
      const std::string name(key.str());
      const std::string where = std::string(source) + ": " + table_name + "." + name;
      const auto setter = table_it->second.find(name);
      if (setter == table_it->second.end()) throw ConfigError(where + " is not a known setting");
      setter->second(node, where);
    }
  }
  if (cfg.model.embedding_dim == 0 || cfg.model.hidden_dim == 0 || cfg.model.classifier_hidden == 0) {
    throw ConfigError(std::string(source) + ": model dimensions must be positive");
  }
  if (cfg.data.max_length < 2) throw ConfigError(std::string(source) + ": data.max_length must be at least 2");
  if (cfg.data.min_doc_count == 0) throw ConfigError(std::string(source) + ": data.min_doc_count must be at least 1");
  cfg.train.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace advt
