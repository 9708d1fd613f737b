// SPDX-License-Identifier: Apache-2.0
#include "advt/text.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "advt/errors.hpp"

namespace advt {

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class F>
void for_each_line(std::string_view content, F&& f) {
  std::size_t line_no = 0;
  while (!content.empty()) {
    ++line_no;
    const std::size_t nl = content.find('\n');
    std::string_view line = content.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    f(line_no, line);
    if (nl == std::string_view::npos) break;
    content.remove_prefix(nl + 1);
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, bool lowercase) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c) || is_ascii_punct(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      continue;
    }
    current.push_back(lowercase && c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<double> frequencies)
    : tokens_(std::move(tokens)), frequencies_(std::move(frequencies)) {
  if (tokens_.size() != frequencies_.size()) throw DataError("vocabulary: token/frequency count mismatch");
  bool has_unk = false;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] == kEos) throw DataError("vocabulary: eos is implicit and must not be listed");
    if (!index_.emplace(tokens_[i], i).second) throw DataError("vocabulary: duplicate token '" + tokens_[i] + "'");
    if (tokens_[i] == kUnk) {
      unk_id_ = i;
      has_unk = true;
    }
    if (!(frequencies_[i] >= 0.0)) throw DataError("vocabulary: negative frequency for '" + tokens_[i] + "'");
  }
  if (!has_unk) throw DataError("vocabulary: missing " + std::string(kUnk));
  const double total = std::accumulate(frequencies_.begin(), frequencies_.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw DataError("vocabulary: frequencies sum to " + format_double(total));
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id_or_unk(std::string_view token) const { return find(token).value_or(unk_id_); }

std::string_view Vocabulary::token(std::size_t id) const {
  if (id == eos_id()) return kEos;
  if (id > eos_id()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += std::to_string(i);
    out += '\t';
    out += tokens_[i];
    out += '\t';
    out += format_double(frequencies_[i]);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::vector<double> freqs;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.empty()) return;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) throw DataError("vocabulary line " + std::to_string(line_no) + ": expected 3 fields");
    std::size_t id = 0;
    double freq = 0.0;
    const auto id_field = line.substr(0, t1);
    const auto freq_field = line.substr(t2 + 1);
    auto r1 = std::from_chars(id_field.data(), id_field.data() + id_field.size(), id);
    auto r2 = std::from_chars(freq_field.data(), freq_field.data() + freq_field.size(), freq);
    if (r1.ec != std::errc() || r1.ptr != id_field.data() + id_field.size() || r2.ec != std::errc() ||
        r2.ptr != freq_field.data() + freq_field.size() || id != tokens.size()) {
      throw DataError("vocabulary line " + std::to_string(line_no) + ": malformed");
    }
    tokens.emplace_back(line.substr(t1 + 1, t2 - t1 - 1));
    freqs.push_back(freq);
  });
  return Vocabulary(std::move(tokens), std::move(freqs));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_text();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return from_text(read_file(path)); }

std::uint64_t Vocabulary::fingerprint() const { return fnv1a64(to_text()); }

Vocabulary build_vocab(std::span<const std::vector<std::string>> documents, std::size_t min_doc_count) {
  if (documents.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> doc_count;
  std::map<std::string, std::size_t> token_count;
  for (const auto& doc : documents) {
    std::set<std::string_view> seen;
    for (const auto& tok : doc) {
      ++token_count[tok];
      if (seen.insert(tok).second) ++doc_count[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  std::size_t total = 0;
  for (const auto& [tok, docs] : doc_count) {
    if (docs < min_doc_count) continue;
    kept.emplace_back(tok, token_count[tok]);
    total += token_count[tok];
  }
  if (kept.empty()) {
    throw DataError("vocabulary is empty after keeping words found in at least " + std::to_string(min_doc_count) +
                    " documents");
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  std::vector<double> freqs;
  for (auto& [tok, count] : kept) {
    tokens.push_back(tok);
    freqs.push_back(static_cast<double>(count) / static_cast<double>(total));
  }
  tokens.emplace_back(Vocabulary::kUnk);
  freqs.push_back(0.0);
  return Vocabulary(std::move(tokens), std::move(freqs));
}

Sequence encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("max_len must be at least 1");
  const std::size_t keep = std::min(tokens.size(), max_len - 1);
  Sequence seq;
  seq.token_ids.reserve(keep + 1);
  for (std::size_t i = tokens.size() - keep; i < tokens.size(); ++i) seq.token_ids.push_back(vocab.id_or_unk(tokens[i]));
  seq.token_ids.push_back(vocab.eos_id());
  return seq;
}

Sequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len, bool lowercase) {
  const auto tokens = tokenize(text, lowercase);
  return encode(tokens, vocab, max_len);
}

std::vector<std::string> decode(const Sequence& sequence, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (std::size_t id : sequence.token_ids) {
    if (id == vocab.eos_id()) break;
    out.emplace_back(vocab.token(id));
  }
  return out;
}

std::size_t Batch::labeled_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); }));
}

std::vector<std::size_t> Batch::label_vector() const {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    if (!l) throw DataError("batch contains unlabeled examples where labels are required");
    out.push_back(*l);
  }
  return out;
}

Batch Batch::without_labels() const {
  Batch copy = *this;
  std::fill(copy.labels.begin(), copy.labels.end(), std::nullopt);
  return copy;
}

Batch collate(std::span<const Sequence* const> sequences, std::size_t pad_id) {
  if (sequences.empty()) throw DataError("cannot collate an empty batch");
  Batch batch;
  batch.batch_size = sequences.size();
  for (const Sequence* s : sequences) {
    if (s->token_ids.empty()) throw DataError("empty sequence in batch");
    batch.max_length = std::max(batch.max_length, s->length());
  }
  batch.token_ids.assign(batch.batch_size * batch.max_length, pad_id);
  batch.mask = Tensor(Shape{batch.batch_size, batch.max_length}, 0.0);
  for (std::size_t b = 0; b < sequences.size(); ++b) {
    const Sequence& s = *sequences[b];
    std::copy(s.token_ids.begin(), s.token_ids.end(), batch.token_ids.begin() + static_cast<std::ptrdiff_t>(b * batch.max_length));
    for (std::size_t t = 0; t < s.length(); ++t) batch.mask[b * batch.max_length + t] = 1.0;
    batch.lengths.push_back(s.length());
    batch.labels.push_back(s.label);
  }
  return batch;
}

Batch collate(std::span<const Sequence> sequences, std::size_t pad_id) {
  std::vector<const Sequence*> ptrs;
  for (const auto& s : sequences) ptrs.push_back(&s);
  return collate(ptrs, pad_id);
}

std::vector<Batch> make_batches(std::span<const Sequence> sequences, std::size_t batch_size, std::size_t pad_id,
                                RngStream& rng) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (sequences.empty()) throw DataError("no sequences to batch");
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<const Sequence*> members;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) members.push_back(&sequences[order[i]]);
    batches.push_back(collate(members, pad_id));
  }
  return batches;
}

BatchStream::BatchStream(std::span<const Sequence> sequences, std::size_t batch_size, std::size_t pad_id, RngStream rng)
    : sequences_(sequences), batch_size_(batch_size), pad_id_(pad_id), rng_(rng) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (sequences.empty()) throw DataError("no sequences to batch");
  order_.resize(sequences.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng_.shuffle(order_);
}

Batch BatchStream::next() {
  std::vector<const Sequence*> members;
  while (members.size() < std::min(batch_size_, sequences_.size())) {
    if (cursor_ == order_.size()) {
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    members.push_back(&sequences_[order_[cursor_++]]);
  }
  return collate(members, pad_id_);
}

std::vector<CorpusLine> parse_corpus(std::string_view content, bool labeled) {
  std::vector<CorpusLine> lines;
  for_each_line(content, [&](std::size_t line_no, std::string_view line) {
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    CorpusLine entry;
    if (labeled) {
      const auto tab = line.find('\t');
      std::size_t label = 0;
      const auto field = line.substr(0, tab);
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), label);
      if (tab == std::string_view::npos || ec != std::errc() || ptr != field.data() + field.size()) {
        throw DataError("line " + std::to_string(line_no) + ": expected <label>\\t<text> with an integer label");
      }
      entry.label = label;
      entry.text = std::string(line.substr(tab + 1));
    } else {
      entry.text = std::string(line);
    }
    lines.push_back(std::move(entry));
  });
  return lines;
}

std::vector<CorpusLine> read_corpus(const std::filesystem::path& path, bool labeled) {
  try {
    return parse_corpus(read_file(path), labeled);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace advt
