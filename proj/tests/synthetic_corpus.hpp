// SPDX-License-Identifier: Apache-2.0
// Two-class review corpus: 48 words plus unk and eos, 50 embedding rows.
// Sentiment words follow a Zipf-like distribution inside each class, so a
// small labeled sample sees mostly the frequent ones while unlabeled text
// covers them all. Every document keeps one polarity, which lets a language
// model learn which words belong together.
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "advt/rng.hpp"
#include "advt/text.hpp"

namespace advt::testing {

inline constexpr std::array<std::string_view, 8> kPositiveWords = {
    "good", "great", "excellent", "wonderful", "superb", "brilliant", "delightful", "enjoyable"};
inline constexpr std::array<std::string_view, 8> kNegativeWords = {
    "bad", "awful", "terrible", "horrible", "dreadful", "boring", "poor", "dull"};

struct SyntheticShape {
  std::size_t min_sentences = 2;
  std::size_t max_sentences = 3;
  double zipf_exponent = 1.0;
};

struct SyntheticCorpus {
  std::vector<CorpusLine> labeled;
  std::vector<CorpusLine> unlabeled;
  std::vector<CorpusLine> test;
};

namespace detail {

inline std::string_view pick(RngStream& rng, std::span<const std::string_view> words) {
  return words[rng.below(words.size())];
}

/// Index into a sentiment list with weight (i + 1)^-a.
inline std::size_t zipf_index(RngStream& rng, std::size_t n, double a) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::pow(static_cast<double>(i + 1), -a);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < n; ++i) {
    u -= std::pow(static_cast<double>(i + 1), -a);
    if (u < 0.0) return i;
  }
  return n - 1;
}

inline std::string document(RngStream& rng, std::size_t label, const SyntheticShape& shape) {
  const auto& polar = label == 1 ? kPositiveWords : kNegativeWords;
  const auto sentiment = [&] { return std::string(polar[zipf_index(rng, polar.size(), shape.zipf_exponent)]); };
  static constexpr std::string_view nouns[] = {"movie", "film", "plot", "acting", "story", "characters", "director",
                                               "scenes", "ending", "music", "cast", "script", "dialogue", "pacing",
                                               "camera"};
  static constexpr std::string_view adverbs[] = {"very", "quite", "really", "so"};
  static constexpr std::string_view verbs[] = {"was", "is", "seemed", "felt"};
  std::string out;
  const std::size_t sentences = shape.min_sentences + rng.below(shape.max_sentences - shape.min_sentences + 1);
  for (std::size_t k = 0; k < sentences; ++k) {
    if (!out.empty()) out += " and ";
    const std::string noun(pick(rng, nouns));
    switch (rng.below(4)) {
      case 0:
        out += "the " + noun + " " + std::string(pick(rng, verbs)) + " " + std::string(pick(rng, adverbs)) + " " +
               sentiment();
        break;
      case 1:
        out += "i thought the " + noun + " was " + sentiment();
        break;
      case 2:
        out += "a " + sentiment() + " " + noun + " with " + sentiment() + " " + std::string(pick(rng, nouns));
        break;
      default:
        out += "overall i found it " + sentiment();
        break;
    }
  }
  return out;
}

inline std::vector<CorpusLine> documents(RngStream rng, std::size_t count, bool keep_labels,
                                         const SyntheticShape& shape) {
  // Labels come in balanced pairs.
  std::vector<CorpusLine> out;
  std::size_t label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    label = i % 2 == 0 ? rng.below(2) : 1 - label;
    std::string text = document(rng, label, shape);
    out.push_back(CorpusLine{keep_labels ? std::optional<std::size_t>(label) : std::nullopt, std::move(text)});
  }
  return out;
}

}  // namespace detail

inline SyntheticCorpus synthetic_corpus(std::uint64_t seed, const SyntheticShape& shape = {},
                                        std::size_t labeled = 20, std::size_t unlabeled = 1000,
                                        std::size_t test = 500) {
  const RngStream root(seed);
  return SyntheticCorpus{detail::documents(root.split("labeled"), labeled, true, shape),
                         detail::documents(root.split("unlabeled"), unlabeled, false, shape),
                         detail::documents(root.split("test"), test, true, shape)};
}

/// Designated antonym pairs: the i-th positive word against the i-th negative.
inline std::vector<std::pair<std::string, std::string>> antonym_pairs() {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < kPositiveWords.size(); ++i) {
    out.emplace_back(std::string(kPositiveWords[i]), std::string(kNegativeWords[i]));
  }
  return out;
}

}  // namespace advt::testing
