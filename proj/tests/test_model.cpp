// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "advt/errors.hpp"
#include "advt/model.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "toy_model.hpp"

using namespace advt;
using advt::testing::batch_of;
using advt::testing::random_normal;
using advt::testing::toy_model;

TEST_CASE("lstm_step") {
  SUBCASE("zero weights give zero output") {
    Graph g;
    const LstmWeights w{g.constant(Tensor(Shape{2, 12})), g.constant(Tensor(Shape{3, 12})), g.constant(Tensor(Shape{12}))};
    const auto next = lstm_step(w, g.constant(Tensor::matrix(1, 2, {0.7, -2.0})), zero_state(g, 1, 3));
    for (double v : next.h.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("finite-difference gradient of sum(h')") {
    RngStream rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      const std::vector<Tensor> inputs = {random_normal({2, 12}, rng), random_normal({3, 12}, rng),
                                          random_normal({12}, rng), random_normal({4, 2}, rng),
                                          random_normal({4, 3}, rng), random_normal({4, 3}, rng)};
      const advt::testing::ScalarFn fn = [](Graph&, const std::vector<Var>& x) {
        const auto next = lstm_step({x[0], x[1], x[2]}, x[3], {x[4], x[5]});
        return sum(next.h) + scale(sum(next.c), 0.3);
      };
      CHECK(advt::testing::max_relative_error(fn, inputs) < 1e-6);
    }
  }
  SUBCASE("masked rows carry state") {
    RngStream rng(5);
    Graph g;
    const LstmWeights w{g.constant(random_normal({2, 8}, rng)), g.constant(random_normal({2, 8}, rng)),
                        g.constant(random_normal({8}, rng))};
    const LstmState state{g.constant(random_normal({3, 2}, rng)), g.constant(random_normal({3, 2}, rng))};
    const char keep[] = {1, 0, 1};
    const auto next = lstm_step_masked(w, g.constant(random_normal({3, 2}, rng)), state, keep);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(next.h.value().at(1, c) == state.h.value().at(1, c));
      CHECK(next.c.value().at(1, c) == state.c.value().at(1, c));
      CHECK(next.h.value().at(0, c) != state.h.value().at(0, c));
    }
  }
  SUBCASE("shape mismatch") {
    Graph g;
    const LstmWeights w{g.constant(Tensor(Shape{2, 12})), g.constant(Tensor(Shape{3, 12})), g.constant(Tensor(Shape{12}))};
    CHECK_THROWS_AS(lstm_step(w, g.constant(Tensor(Shape{1, 3})), zero_state(g, 1, 3)), ShapeError);
  }
}

TEST_CASE("encode_sequence") {
  SUBCASE("single step equals one lstm_step") {
    const Model m = toy_model(4, 3, 4, 2, false, 1);
    Graph g;
    BoundModel bm(g, m, Binding::kFrozen);
    const Var s = g.constant(random_normal({2, 1, 3}, *std::make_unique<RngStream>(2)));
    const std::size_t lengths[] = {1, 1};
    const Var feature = encode_sequence(bm, s, lengths);
    const auto step = lstm_step(lstm_weights(bm, param::kForward), reshape(s, {2, 3}), zero_state(g, 2, 4));
    CHECK(bitwise_equal(feature.value(), step.h.value()));
  }
  SUBCASE("bidirectional width and padding invariance") {
    for (bool bi : {false, true}) {
      const Model m = toy_model(5, 3, 4, 2, bi, 7, true);
      const auto rows = std::vector<std::vector<std::size_t>>{{0, 3, 5}, {2, 5}};
      const Batch tight = batch_of(rows, 5);
      const Batch padded = batch_of(rows, 5, 2);
      REQUIRE(padded.max_length == tight.max_length + 2);
      auto features = [&](const Batch& b) {
        Graph g;
        BoundModel bm(g, m, Binding::kFrozen);
        RngStream rng(0);
        const Var s = embed_batch(bm, b, 0.0, rng, false);
        Tensor f = encode_sequence(bm, s, b.lengths).value();
        Tensor lp = classify(bm, s, b.lengths).value();
        Tensor lm = lm_loss(bm, s, b).value();
        return std::tuple{std::move(f), std::move(lp), std::move(lm)};
      };
      const auto [f1, lp1, lm1] = features(tight);
      const auto [f2, lp2, lm2] = features(padded);
      CHECK(f1.shape() == Shape{2, bi ? 8u : 4u});
      CHECK(bitwise_equal(f1, f2));
      CHECK(bitwise_equal(lp1, lp2));
      CHECK(bitwise_equal(lm1, lm2));
    }
  }
  SUBCASE("each row matches the sequence encoded alone") {
    for (bool bi : {false, true}) {
      const Model m = toy_model(6, 3, 4, 2, bi, 13);
      const std::vector<std::vector<std::size_t>> rows = {{4, 5, 6}, {1, 2, 3, 0, 6}, {6}, {2, 3, 6}, {5, 6}};
      auto features = [&](const std::vector<std::vector<std::size_t>>& rs) {
        const Batch b = batch_of(rs, 6);
        Graph g;
        BoundModel bm(g, m, Binding::kFrozen);
        RngStream rng(0);
        return encode_sequence(bm, embed_batch(bm, b, 0.0, rng, false), b.lengths).value();
      };
      const Tensor all = features(rows);
      const std::size_t width = all.dim(1);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const Tensor alone = features({rows[r]});
        for (std::size_t c = 0; c < width; ++c) CHECK(all.at(r, c) == alone.at(0, c));
      }
    }
  }
  SUBCASE("all-masked example is rejected") {
    const Model m = toy_model(4, 3, 4, 2, false, 1);
    Graph g;
    BoundModel bm(g, m, Binding::kFrozen);
    const std::size_t lengths[] = {2, 0};
    CHECK_THROWS_AS(encode_sequence(bm, g.constant(Tensor(Shape{2, 2, 3})), lengths), DataError);
  }
  SUBCASE("palindrome with tied directions") {
    Model m = toy_model(5, 3, 4, 2, true, 11);
    for (const char* part : {"w_input", "w_hidden", "bias"}) {
      m.params[param::lstm(param::kBackward, part)] = m.params[param::lstm(param::kForward, part)];
    }
    const Batch b = batch_of({{1, 2, 3, 2, 1}, {4, 0, 4}}, 5, 1);
    Graph g;
    BoundModel bm(g, m, Binding::kFrozen);
    RngStream rng(0);
    const Var f = encode_sequence(bm, embed_batch(bm, b, 0.0, rng, false), b.lengths);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(f.value().at(r, c) == f.value().at(r, c + 4));
  }
}

TEST_CASE("classify") {
  SUBCASE("zero head gives uniform output") {
    Model m = toy_model(4, 3, 4, 3, false, 2);
    m.params[param::kClassifierOutW].fill(0.0);
    m.params[param::kClassifierOutB].fill(0.0);
    Graph g;
    BoundModel bm(g, m, Binding::kFrozen);
    const Batch b = batch_of({{0, 1, 4}, {2, 4}}, 4);
    RngStream rng(0);
    const Var lp = classify(bm, embed_batch(bm, b, 0.0, rng, false), b.lengths);
    for (double v : lp.value().data()) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("rows are normalized") {
    const Model m = toy_model(6, 3, 4, 4, true, 3);
    Graph g;
    BoundModel bm(g, m, Binding::kFrozen);
    const Batch b = batch_of({{0, 1, 5, 6}, {2, 6}, {3, 4, 6}}, 6);
    RngStream rng(0);
    const Tensor lp = classify(bm, embed_batch(bm, b, 0.0, rng, false), b.lengths).value();
    for (std::size_t r = 0; r < 3; ++r) {
      double z = 0.0;
      for (std::size_t c = 0; c < 4; ++c) z += std::exp(lp.at(r, c));
      CHECK(std::abs(std::log(z)) < 1e-12);
    }
  }
  SUBCASE("gradient with respect to s") {
    const Model m = toy_model(3, 2, 3, 2, false, 4);
    const std::size_t lengths[] = {2};
    const std::size_t label[] = {1};
    const advt::testing::ScalarFn fn = [&](Graph& g, const std::vector<Var>& x) {
      BoundModel bm(g, m, Binding::kFrozen);
      return nll(classify(bm, x[0], lengths), label);
    };
    RngStream rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      CHECK(advt::testing::max_relative_error(fn, {random_normal({1, 2, 2}, rng)}) < 1e-6);
    }
  }
}

TEST_CASE("full-model gradient check") {
  // K = 5, D = 3, H = 4, C = 2, T = 3; every parameter including the
  // embedding matrix through its normalization.
  for (bool bi : {false, true}) {
    const Model base = toy_model(5, 3, 4, 2, bi, 21);
    Model model = base;
    model.frequencies = {0.1, 0.3, 0.2, 0.25, 0.15};
    const Batch b = batch_of({{0, 1, 5}, {3, 5}, {2, 4, 5}}, 5);
    const std::vector<std::size_t> labels = {1, 0, 1};
    std::vector<std::string> names;
    std::vector<Tensor> inputs;
    for (const auto& [name, t] : model.params) {
      names.push_back(name);
      inputs.push_back(t);
    }
    const advt::testing::ScalarFn fn = [&](Graph& g, const std::vector<Var>& x) {
      std::map<std::string, Var> vars;
      for (std::size_t i = 0; i < names.size(); ++i) vars.emplace(names[i], x[i]);
      BoundModel bm(g, model, std::move(vars));
      RngStream rng(0);
      return nll(classify(bm, embed_batch(bm, b, 0.0, rng, false), b.lengths), labels);
    };
    CHECK(advt::testing::max_relative_error(fn, inputs) < 1e-5);
  }
}

TEST_CASE("language-model head") {
  const Model m = toy_model(4, 3, 4, 2, false, 5, true);
  Graph g;
  BoundModel bm(g, m, Binding::kFrozen);
  SUBCASE("single position predicts eos") {
    const Batch b = batch_of({{4}}, 4);
    RngStream rng(0);
    const Var logits = lm_logits(bm, embed_batch(bm, b, 0.0, rng, false), b.lengths);
    CHECK(logits.shape() == Shape{1, 5});
    CHECK(lm_targets(b, 4) == std::vector<std::size_t>{4});
  }
  SUBCASE("targets in both directions") {
    const Batch b = batch_of({{0, 1, 2, 4}, {3, 4}}, 4);
    CHECK(lm_targets(b, 4, "fw") == std::vector<std::size_t>{1, 2, 4, 4, 4, 4, 4, 4});
    // Reversed rows read eos 2 1 0 and eos 3.
    CHECK(lm_targets(b, 4, "bw") == std::vector<std::size_t>{2, 1, 0, 4, 3, 4, 4, 4});
  }
}
