// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advt/analysis.hpp"
#include "advt/checkpoint.hpp"
#include "advt/config.hpp"
#include "advt/errors.hpp"
#include "advt/text.hpp"
#include "advt/trainer.hpp"

namespace fs = std::filesystem;
using namespace advt;

namespace {

constexpr int kUsage = 1, kData = 2, kNumerical = 3;

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

std::vector<Sequence> encode_lines(const std::vector<CorpusLine>& lines, const Vocabulary& vocab,
                                   const DataConfig& data) {
  std::vector<Sequence> out;
  out.reserve(lines.size());
  for (const CorpusLine& line : lines) {
    Sequence s = encode(line.text, vocab, data.max_length, data.lowercase);
    s.label = line.label;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sequence> read_sequences(const std::string& path, bool labeled, const Vocabulary& vocab,
                                     const DataConfig& data) {
  if (path.empty()) return {};
  return encode_lines(read_corpus(path, labeled), vocab, data);
}

std::size_t class_count(std::span<const Sequence> labeled) {
  std::size_t classes = 2;
  for (const Sequence& s : labeled) classes = std::max(classes, *s.label + 1);
  return classes;
}

void check_labels(std::span<const Sequence> data, std::size_t classes, const std::string& path) {
  for (const Sequence& s : data) {
    if (*s.label >= classes) {
      throw DataError(path + ": label " + std::to_string(*s.label) + " but the model has " +
                      std::to_string(classes) + " classes");
    }
  }
}

struct Loaded {
  Vocabulary vocab;
  Checkpoint checkpoint;
};

Loaded load_with_vocab(const fs::path& ckpt) {
  Vocabulary vocab = Vocabulary::load(vocab_path_for(ckpt));
  Checkpoint checkpoint = load_checkpoint(ckpt, vocab.fingerprint());
  return {std::move(vocab), std::move(checkpoint)};
}

void save_with_vocab(const Checkpoint& checkpoint, const Vocabulary& vocab, const fs::path& out) {
  save_checkpoint(checkpoint, out);
  vocab.save(vocab_path_for(out));
}

struct PretrainArgs {
  std::string corpus, unlabeled, config, out;
};

int run_pretrain(const PretrainArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  std::vector<CorpusLine> lines = read_corpus(a.corpus, true);
  if (!a.unlabeled.empty()) {
    for (CorpusLine& l : read_corpus(a.unlabeled, false)) lines.push_back(std::move(l));
  }
  std::vector<std::vector<std::string>> docs;
  docs.reserve(lines.size());
  for (const CorpusLine& l : lines) docs.push_back(tokenize(l.text, cfg.data.lowercase));
  const Vocabulary vocab = build_vocab(docs, cfg.data.min_doc_count);
  for (CorpusLine& l : lines) l.label.reset();
  const std::vector<Sequence> corpus = encode_lines(lines, vocab, cfg.data);

  ModelConfig mc = cfg.model;
  mc.vocab_rows = vocab.rows();
  RngStream init_rng = RngStream(cfg.train.seed).split("init");
  const Model init = init_model(mc, {vocab.frequencies().begin(), vocab.frequencies().end()}, init_rng, false, true);
  try {
    const TrainResult result = pretrain_lm(init, vocab.fingerprint(), corpus, cfg.train);
    save_with_vocab(result.checkpoint, vocab, a.out);
    std::printf("vocab %zu words, %zu sequences, final lm loss %.6f\n", vocab.size(), corpus.size(),
                result.losses.empty() ? 0.0 : result.losses.back());
  } catch (const TrainingDiverged& e) {
    save_with_vocab(e.last_good(), vocab, a.out);
    throw;
  }
  return 0;
}

struct TrainArgs {
  std::string labeled, unlabeled, test, init, method, config, out, metrics;
  std::optional<double> epsilon;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = config_or_default(a.config);
  if (!a.method.empty()) cfg.train.perturbation.kind = parse_method(a.method);
  if (a.epsilon) cfg.train.perturbation.epsilon = *a.epsilon;
  if (a.seed) cfg.train.seed = *a.seed;
  cfg.train.validate();

  Loaded init = load_with_vocab(a.init);
  const std::vector<Sequence> labeled = read_sequences(a.labeled, true, init.vocab, cfg.data);
  const std::vector<Sequence> unlabeled = read_sequences(a.unlabeled, false, init.vocab, cfg.data);
  const std::vector<Sequence> test = read_sequences(a.test, true, init.vocab, cfg.data);
  if (labeled.empty()) throw DataError(a.labeled + ": no labeled examples");

  Model model = init.checkpoint.model;
  if (!model.has_classifier()) {
    RngStream head_rng = RngStream(cfg.train.seed).split("head");
    model = to_classifier(model, class_count(labeled), cfg.model.classifier_hidden, head_rng);
  }
  check_labels(labeled, model.config.num_classes, a.labeled);
  check_labels(test, model.config.num_classes, a.test);

  try {
    const TrainResult result = train_classifier(model, init.vocab.fingerprint(), labeled, unlabeled, test, cfg.train);
    save_with_vocab(result.checkpoint, init.vocab, a.out);
    if (!a.metrics.empty()) write_metrics(a.metrics, result.metrics);
    if (!result.metrics.empty()) {
      const MetricRow& last = result.metrics.back();
      std::printf("%s step %zu %s nll %.6f error %.4f\n", std::string(method_name(cfg.train.perturbation.kind)).c_str(),
                  static_cast<std::size_t>(last.step), last.split.c_str(), last.nll, last.error_rate);
    }
  } catch (const TrainingDiverged& e) {
    save_with_vocab(e.last_good(), init.vocab, a.out);
    throw;
  }
  return 0;
}

struct EvalArgs {
  std::string ckpt, test, config;
  double epsilon = TrainConfig{}.diagnostic_epsilon;
};

int run_eval(const EvalArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  const Loaded loaded = load_with_vocab(a.ckpt);
  const Model& model = loaded.checkpoint.model;
  if (!model.has_classifier()) throw DataError(a.ckpt + ": checkpoint has no classifier head");
  const std::vector<Sequence> test = read_sequences(a.test, true, loaded.vocab, cfg.data);
  if (test.empty()) throw DataError(a.test + ": no labeled examples");
  check_labels(test, model.config.num_classes, a.test);
  const Evaluation e = evaluate_classifier(model, test, a.epsilon, cfg.train.perturbation.xi,
                                           cfg.train.eval_batch_size, RngStream(cfg.train.seed).split("eval").seed());
  std::printf("examples %zu\nnll %.6f\nerror_rate %.6f\nl_adv %.6f\nl_vadv %.6f\n", test.size(), e.nll, e.error_rate,
              e.l_adv, e.l_vadv);
  return 0;
}

struct NeighborArgs {
  std::string ckpt, query, target;
  std::size_t k = 10;
};

int run_neighbors(const NeighborArgs& a) {
  const Loaded loaded = load_with_vocab(a.ckpt);
  const Tensor table = normalized_embedding_table(loaded.checkpoint.model);
  if (!a.target.empty()) {
    const RankResult r = rank_of(table, loaded.vocab, a.query, a.target);
    std::printf("%s\t%s\trank %zu\tdistance %.6f\n", a.query.c_str(), a.target.c_str(), r.rank, r.distance);
    return 0;
  }
  const NeighborReport report = nearest_neighbors(table, loaded.vocab, a.query, a.k);
  for (std::size_t i = 0; i < report.neighbors.size(); ++i) {
    const Neighbor& n = report.neighbors[i];
    std::printf("%zu\t%s\t%.6f\n", i + 1, n.token.c_str(), n.distance);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSTM text classification with adversarial and virtual adversarial training"};
  app.require_subcommand(1);

  PretrainArgs pre;
  CLI::App* pretrain = app.add_subcommand("pretrain", "train the language model on labeled and unlabeled text");
  pretrain->add_option("--corpus", pre.corpus, "labeled corpus, <label>\\t<text> per line")->required();
  pretrain->add_option("--unlabeled", pre.unlabeled, "unlabeled corpus, one text per line");
  pretrain->add_option("--config", pre.config, "TOML run configuration");
  pretrain->add_option("--out", pre.out, "checkpoint to write")->required();

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "train the classifier from a pretrained checkpoint");
  train->add_option("--labeled", tr.labeled, "labeled corpus")->required();
  train->add_option("--unlabeled", tr.unlabeled, "unlabeled corpus");
  train->add_option("--test", tr.test, "labeled corpus evaluated at every metric row");
  train->add_option("--init", tr.init, "pretrained checkpoint")->required();
  train->add_option("--method", tr.method, "baseline|adv|vat|adv+vat|rand-l|rand-u");
  train->add_option("--epsilon", tr.epsilon, "perturbation norm");
  train->add_option("--seed", tr.seed, "overrides train.seed");
  train->add_option("--config", tr.config, "TOML run configuration");
  train->add_option("--out", tr.out, "checkpoint to write")->required();
  train->add_option("--metrics", tr.metrics, "metric CSV to write");

  EvalArgs ev;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a classifier checkpoint");
  eval->add_option("--ckpt", ev.ckpt)->required();
  eval->add_option("--test", ev.test, "labeled corpus")->required();
  eval->add_option("--epsilon", ev.epsilon, "norm for the L_adv and L_vadv diagnostics");
  eval->add_option("--config", ev.config, "TOML run configuration");

  NeighborArgs nb;
  CLI::App* neighbors = app.add_subcommand("neighbors", "nearest words by cosine distance of normalized embeddings");
  neighbors->add_option("--ckpt", nb.ckpt)->required();
  neighbors->add_option("--query", nb.query)->required();
  neighbors->add_option("--k", nb.k);
  neighbors->add_option("--target", nb.target, "report the rank of this word instead");

  std::vector<std::string> curve_logs;
  std::string curve_out;
  CLI::App* curves = app.add_subcommand("curves", "merge metric logs into long-format learning curves");
  curves->add_option("--metrics", curve_logs, "metric CSVs, one run each")->required();
  curves->add_option("--out", curve_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*pretrain) return run_pretrain(pre);
    if (*train) return run_train(tr);
    if (*eval) return run_eval(ev);
    if (*neighbors) return run_neighbors(nb);
    if (*curves) {
      const std::vector<fs::path> paths(curve_logs.begin(), curve_logs.end());
      emit_learning_curves(paths, curve_out);
      return 0;
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << " (last good checkpoint at step " << e.last_good().step << " saved)\n";
    return kNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
