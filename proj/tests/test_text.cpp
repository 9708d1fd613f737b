// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <filesystem>
#include <numeric>

#include "advt/errors.hpp"
#include "advt/text.hpp"
#include "doctest.h"

using namespace advt;

namespace {

std::vector<std::vector<std::string>> docs(std::initializer_list<const char*> texts) {
  std::vector<std::vector<std::string>> out;
  for (const char* t : texts) out.push_back(tokenize(t));
  return out;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("Good, not bad.", true) == std::vector<std::string>{"good", "not", "bad"});
  CHECK(tokenize("end-to-end") == std::vector<std::string>{"end", "to", "end"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("Keep CASE", false) == std::vector<std::string>{"Keep", "CASE"});
  CHECK(tokenize("  tabs\tand\nnewlines!!") == std::vector<std::string>{"tabs", "and", "newlines"});
  // Markers used for reserved tokens cannot come out of the tokenizer.
  CHECK(tokenize("<unk> <eos>") == std::vector<std::string>{"unk", "eos"});
}

TEST_CASE("build_vocab") {
  SUBCASE("document-count filter") {
    const auto corpus = docs({"a a b", "a c"});
    const Vocabulary v = build_vocab(corpus, 2);
    REQUIRE(v.size() == 2);
    CHECK(v.token(0) == "a");
    CHECK(v.token(v.unk_id()) == Vocabulary::kUnk);
    // Retained-token stream is "a a a": f_a = 1.
    CHECK(v.frequencies()[0] == 1.0);
    CHECK(v.frequencies()[v.unk_id()] == 0.0);
    CHECK(v.eos_id() == 2);
  }
  SUBCASE("no filtering") {
    const auto corpus = docs({"a a b", "a c"});
    const Vocabulary v = build_vocab(corpus, 1);
    CHECK(v.size() == 4);
    for (const char* w : {"a", "b", "c"}) CHECK(v.find(w).has_value());
    // Counts a=3, b=1, c=1 over 5 tokens.
    CHECK(v.frequencies()[*v.find("a")] == doctest::Approx(0.6));
    CHECK(v.frequencies()[*v.find("b")] == doctest::Approx(0.2));
  }
  SUBCASE("degenerate corpus") {
    const auto corpus = docs({"x y z"});
    CHECK_THROWS_AS(build_vocab(corpus, 2), DataError);
    CHECK_THROWS_AS(build_vocab(std::vector<std::vector<std::string>>{}, 2), DataError);
  }
  SUBCASE("frequencies sum to one and ignore document order") {
    auto corpus = docs({"the cat sat", "the dog sat down", "a cat and a dog", "the end"});
    const Vocabulary v1 = build_vocab(corpus, 2);
    std::reverse(corpus.begin(), corpus.end());
    const Vocabulary v2 = build_vocab(corpus, 2);
    const auto f = v1.frequencies();
    CHECK(std::abs(std::accumulate(f.begin(), f.end(), 0.0) - 1.0) <= 1e-12);
    CHECK(v1.to_text() == v2.to_text());
    for (std::size_t i = 0; i < v1.size(); ++i) {
      if (i != v1.unk_id()) CHECK(f[i] > 0.0);
    }
  }
}

TEST_CASE("vocabulary persistence") {
  const auto corpus = docs({"alpha beta gamma", "beta gamma delta", "gamma alpha"});
  const Vocabulary v = build_vocab(corpus, 2);
  const Vocabulary back = Vocabulary::from_text(v.to_text());
  CHECK(back.to_text() == v.to_text());
  CHECK(back.fingerprint() == v.fingerprint());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back.frequencies()[i] == v.frequencies()[i]);

  const auto path = std::filesystem::temp_directory_path() / "advt_test_vocab.txt";
  v.save(path);
  CHECK(Vocabulary::load(path).to_text() == v.to_text());
  std::filesystem::remove(path);

  CHECK_THROWS_AS(Vocabulary::from_text("0\tx\n"), DataError);
  CHECK_THROWS_AS(Vocabulary::from_text("0\tx\t1\n"), DataError);  // no <unk>
  CHECK_THROWS_AS(Vocabulary::from_text("1\tx\t1\n0\t<unk>\t0\n"), DataError);
}

TEST_CASE("encode") {
  const auto corpus = docs({"good bad fine ok yes", "good bad fine ok yes"});
  const Vocabulary v = build_vocab(corpus, 2);
  SUBCASE("no truncation") {
    const Sequence s = encode("good", v, 4);
    CHECK(s.token_ids == std::vector<std::size_t>{*v.find("good"), v.eos_id()});
  }
  SUBCASE("keeps the tail") {
    const Sequence s = encode("good bad fine ok yes", v, 3);
    CHECK(s.token_ids == std::vector<std::size_t>{*v.find("ok"), *v.find("yes"), v.eos_id()});
  }
  SUBCASE("unknown words") {
    const Sequence s = encode("good zebra", v, 10);
    CHECK(s.token_ids[1] == v.unk_id());
  }
  SUBCASE("max_len 1 keeps only eos") {
    CHECK(encode("good bad", v, 1).token_ids == std::vector<std::size_t>{v.eos_id()});
  }
  SUBCASE("decode round trip") {
    const std::vector<std::string> words = {"fine", "good", "yes", "bad"};
    CHECK(decode(encode(words, v, 10), v) == words);
    CHECK(decode(encode(words, v, 3), v) == std::vector<std::string>{"yes", "bad"});
  }
}

TEST_CASE("batching") {
  auto seq = [](std::size_t n, std::optional<std::size_t> label = std::nullopt) {
    Sequence s;
    for (std::size_t i = 0; i < n; ++i) s.token_ids.push_back(i);
    s.label = label;
    return s;
  };
  SUBCASE("partition") {
    std::vector<Sequence> seqs = {seq(2), seq(3), seq(4)};
    RngStream rng(1);
    auto batches = make_batches(seqs, 2, 9, rng);
    REQUIRE(batches.size() == 2);
    CHECK(batches[0].batch_size == 2);
    CHECK(batches[1].batch_size == 1);
  }
  SUBCASE("padding and mask") {
    std::vector<Sequence> seqs = {seq(3, 1), seq(5)};
    Batch b = collate(std::span<const Sequence>(seqs), 7);
    CHECK(b.max_length == 5);
    CHECK(b.mask.shape() == Shape{2, 5});
    double row0 = 0, row1 = 0;
    for (std::size_t t = 0; t < 5; ++t) {
      row0 += b.mask[t];
      row1 += b.mask[5 + t];
      if (b.mask[t] == 0.0) CHECK(b.token_ids[t] == 7);
    }
    CHECK(row0 == 3);
    CHECK(row1 == 5);
    CHECK(b.labeled_count() == 1);
    CHECK(b.total_count() == 2);
    CHECK_THROWS_AS(b.label_vector(), DataError);
    CHECK(b.without_labels().labeled_count() == 0);
  }
  SUBCASE("determinism") {
    std::vector<Sequence> seqs;
    for (std::size_t i = 1; i <= 10; ++i) seqs.push_back(seq(i, i));
    RngStream a(5), b(5);
    auto x = make_batches(seqs, 3, 0, a);
    auto y = make_batches(seqs, 3, 0, b);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i].labels == y[i].labels);
  }
  SUBCASE("stream covers each epoch") {
    std::vector<Sequence> seqs;
    for (std::size_t i = 1; i <= 5; ++i) seqs.push_back(seq(i, i));
    BatchStream stream(seqs, 5, 0, RngStream(3));
    for (int epoch = 0; epoch < 3; ++epoch) {
      auto b = stream.next();
      auto labels = b.label_vector();
      std::sort(labels.begin(), labels.end());
      CHECK(labels == std::vector<std::size_t>{1, 2, 3, 4, 5});
    }
  }
  SUBCASE("errors") {
    RngStream rng(1);
    std::vector<Sequence> none;
    CHECK_THROWS_AS(make_batches(none, 2, 0, rng), DataError);
  }
}

TEST_CASE("corpus files") {
  auto labeled = parse_corpus("1\tGreat movie!\n\n0\tawful\r\n", true);
  REQUIRE(labeled.size() == 2);
  CHECK(labeled[0].label == 1u);
  CHECK(labeled[1].text == "awful");
  auto unlabeled = parse_corpus("just text\nmore text", false);
  CHECK(unlabeled.size() == 2);
  CHECK_FALSE(unlabeled[0].label.has_value());
  CHECK_THROWS_AS(parse_corpus("pos\ttext\n", true), DataError);
  CHECK_THROWS_AS(parse_corpus("no tab here\n", true), DataError);
  CHECK_THROWS_AS(read_corpus("/nonexistent/corpus.tsv", true), DataError);
}
