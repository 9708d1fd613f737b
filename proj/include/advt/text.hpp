// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "advt/rng.hpp"
#include "advt/tensor.hpp"

namespace advt {

/// ASCII punctuation becomes whitespace, then the text is split on
/// whitespace. Optionally lowercases ASCII letters.
std::vector<std::string> tokenize(std::string_view text, bool lowercase = true);

/// Token <-> id map over [0, K) plus per-word training frequencies. The
/// end-of-sequence token is not part of the map; its id is always K.
/// Words dropped by the document-count filter encode to `<unk>`.
class Vocabulary {
 public:
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kEos = "<eos>";

  Vocabulary() = default;
  /// `tokens` must be unique and contain kUnk; `frequencies` parallel to it.
  Vocabulary(std::vector<std::string> tokens, std::vector<double> frequencies);

  /// K, the number of ids excluding eos.
  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t eos_id() const noexcept { return tokens_.size(); }
  std::size_t unk_id() const noexcept { return unk_id_; }
  /// Rows of the embedding matrix, K + 1.
  std::size_t rows() const noexcept { return tokens_.size() + 1; }

  std::optional<std::size_t> find(std::string_view token) const;
  std::size_t id_or_unk(std::string_view token) const;
  /// kEos for eos_id().
  std::string_view token(std::size_t id) const;

  /// f_i for i in [0, K); sums to 1. `<unk>` carries the weight of no
  /// retained token, so its entry is 0.
  std::span<const double> frequencies() const noexcept { return frequencies_; }

  /// `<id>\t<token>\t<frequency>` per line, frequencies printed exactly.
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  /// Hash of to_text(); identifies the vocabulary inside checkpoints.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> tokens_;
  std::vector<double> frequencies_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t unk_id_ = 0;
};

/// Keeps words that occur in at least `min_doc_count` documents. Ids are
/// assigned by descending corpus count, ties by token, with `<unk>` last.
/// Frequencies are relative counts over the retained tokens. Throws DataError
/// if nothing survives the filter.
Vocabulary build_vocab(std::span<const std::vector<std::string>> documents, std::size_t min_doc_count = 2);

struct Sequence {
  /// w(1..T), the last entry is always eos.
  std::vector<std::size_t> token_ids;
  std::optional<std::size_t> label;

  std::size_t length() const noexcept { return token_ids.size(); }
};

/// Maps tokens to ids (unknown -> unk), keeps the last max_len - 1 tokens and
/// appends eos.
Sequence encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t max_len);
Sequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len, bool lowercase = true);

/// Inverse of encode for in-vocabulary ids; drops the trailing eos.
std::vector<std::string> decode(const Sequence& sequence, const Vocabulary& vocab);

/// Right-padded batch. Row b holds lengths[b] real ids followed by pad ids.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t max_length = 0;
  std::vector<std::size_t> token_ids;  // batch_size x max_length, row-major
  Tensor mask;                         // batch_size x max_length, 1 on real tokens
  std::vector<std::size_t> lengths;
  std::vector<std::optional<std::size_t>> labels;

  /// N: examples that carry a label.
  std::size_t labeled_count() const noexcept;
  /// N': all examples.
  std::size_t total_count() const noexcept { return batch_size; }
  bool fully_labeled() const noexcept { return labeled_count() == batch_size; }
  /// Labels of a fully labeled batch; throws otherwise.
  std::vector<std::size_t> label_vector() const;
  /// Same ids and mask with every label removed.
  Batch without_labels() const;
};

/// Pads with `pad_id`, which must be a valid embedding row.
Batch collate(std::span<const Sequence* const> sequences, std::size_t pad_id);
Batch collate(std::span<const Sequence> sequences, std::size_t pad_id);

/// One shuffled pass over `sequences` in batches of `batch_size` (the last
/// batch may be smaller).
std::vector<Batch> make_batches(std::span<const Sequence> sequences, std::size_t batch_size, std::size_t pad_id,
                                RngStream& rng);

/// Endless batch source that reshuffles at every epoch boundary.
class BatchStream {
 public:
  BatchStream(std::span<const Sequence> sequences, std::size_t batch_size, std::size_t pad_id, RngStream rng);
  Batch next();

 private:
  std::span<const Sequence> sequences_;
  std::size_t batch_size_;
  std::size_t pad_id_;
  RngStream rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct CorpusLine {
  std::optional<std::size_t> label;
  std::string text;
};

/// `<label>\t<text>` per line when `labeled`, bare text otherwise. Blank lines
/// are skipped. Throws DataError naming the line on malformed input.
std::vector<CorpusLine> read_corpus(const std::filesystem::path& path, bool labeled);
std::vector<CorpusLine> parse_corpus(std::string_view content, bool labeled);

}  // namespace advt
