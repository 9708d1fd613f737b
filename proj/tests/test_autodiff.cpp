// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "advt/errors.hpp"
#include "advt/graph.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "primitive_cases.hpp"

using namespace advt;
using advt::testing::max_relative_error;
using advt::testing::random_tensor;

TEST_CASE("forward examples") {
  Graph g;
  auto sm = softmax(g.constant(Tensor::vector({0, 0})));
  CHECK(sm.value()[0] == doctest::Approx(0.5));
  CHECK(sm.value()[1] == doctest::Approx(0.5));

  auto ls = log_softmax(g.constant(Tensor::vector({1, 1, 1})));
  for (double v : ls.value().data()) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-15));

  auto zero = g.constant(Tensor::scalar(0.0));
  CHECK(mul(sigmoid(zero), tanh(zero)).value().item() == 0.0);

  const Var outs[] = {sm, ls};
  auto values = g.forward(outs);
  CHECK(values[0] == sm.value());
  CHECK(values[1] == ls.value());
}

TEST_CASE("backward examples") {
  SUBCASE("sum of squares") {
    Graph g;
    auto w = g.parameter(Tensor::vector({1, 2}));
    auto grad = g.gradient(sum(w * w), w);
    CHECK(grad == Tensor::vector({2, 4}));
  }
  SUBCASE("log_softmax component against finite differences") {
    // Oracle value computed by central differences (h = 1e-6) on the closed form
    // log(e^z0 / (e^z0 + e^z1)).
    auto closed = [](double z0, double z1) { return z0 - std::log(std::exp(z0) + std::exp(z1)); };
    const double h = 1e-6;
    const double fd0 = (closed(h, 0) - closed(-h, 0)) / (2 * h);
    const double fd1 = (closed(0, h) - closed(0, -h)) / (2 * h);
    CHECK(fd0 == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(fd1 == doctest::Approx(-0.5).epsilon(1e-8));

    Graph g;
    auto z = g.parameter(Tensor::vector({0, 0}));
    auto out = slice(log_softmax(z), 0, 0, 1);
    auto grad = g.gradient(sum(out), z);
    CHECK(grad[0] == doctest::Approx(fd0).epsilon(1e-9));
    CHECK(grad[1] == doctest::Approx(fd1).epsilon(1e-9));
  }
  SUBCASE("KL at p == q has zero gradient in q") {
    Graph g;
    auto p = g.constant(Tensor::vector({0.3, -1.2, 2.0}));
    auto q = g.parameter(Tensor::vector({0.3, -1.2, 2.0}));
    auto grad = g.gradient(kl_categorical(p, q), q);
    for (double v : grad.data()) CHECK(std::abs(v) < 1e-15);
  }
  SUBCASE("unreached leaves get zero adjoints") {
    Graph g;
    auto a = g.parameter(Tensor::vector({1, 2}));
    auto b = g.parameter(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    auto grads = g.backward(sum(a));
    CHECK_FALSE(grads.reached(b));
    CHECK(grads.of(b) == Tensor(Shape{2, 2}, 0.0));
  }
  SUBCASE("non-scalar output is rejected") {
    Graph g;
    auto a = g.parameter(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(g.backward(a * a), ShapeError);
  }
}

TEST_CASE("stop_gradient") {
  SUBCASE("only the live factor differentiates") {
    Graph g;
    auto w = g.parameter(Tensor::vector({3}));
    CHECK(g.gradient(sum(stop_gradient(w) * w), w) == Tensor::vector({3}));
  }
  SUBCASE("fully blocked") {
    Graph g;
    auto w = g.parameter(Tensor::vector({3}));
    CHECK(g.gradient(sum(stop_gradient(w)), w) == Tensor::vector({0}));
  }
  SUBCASE("value transparent, adjoint opaque on random inputs") {
    RngStream rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      Graph g;
      auto w = g.parameter(random_tensor({3, 4}, rng));
      auto h = tanh(matmul(w, g.constant(random_tensor({4, 2}, rng))));
      auto blocked = stop_gradient(h);
      CHECK(bitwise_equal(blocked.value(), h.value()));
      CHECK_FALSE(g.requires_grad(blocked));
      auto grads = g.backward(sum(square(blocked)));
      CHECK_FALSE(grads.reached(h));
      CHECK_FALSE(grads.reached(w));
    }
  }
}

TEST_CASE("kl_categorical") {
  SUBCASE("identical logits") {
    Graph g;
    auto p = g.constant(Tensor::vector({2, -1}));
    CHECK(kl_categorical(p, p).value().item() == 0.0);
  }
  SUBCASE("closed form") {
    // p = (1/2, 1/2), q = (3/4, 1/4).
    const double oracle = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
    CHECK(oracle == doctest::Approx(0.1438).epsilon(1e-3));
    Graph g;
    auto kl = kl_categorical(g.constant(Tensor::vector({0, 0})), g.constant(Tensor::vector({std::log(3.0), 0})));
    CHECK(kl.value().item() == doctest::Approx(oracle).epsilon(1e-13));
  }
  SUBCASE("batch mean and Gibbs inequality") {
    RngStream rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      Graph g;
      auto p = g.constant(random_tensor({3, 4}, rng, -4, 4));
      auto q = g.constant(random_tensor({3, 4}, rng, -4, 4));
      CHECK(kl_categorical(p, q).value().item() >= -1e-12);
      CHECK(std::abs(kl_categorical(p, p).value().item()) <= 1e-12);
    }
  }
  SUBCASE("shape mismatch") {
    Graph g;
    CHECK_THROWS_AS(kl_categorical(g.constant(Tensor::vector({0, 0})), g.constant(Tensor::vector({0, 0, 0}))),
                    ShapeError);
  }
}

TEST_CASE("finite-difference check for every primitive") {
  RngStream rng(2024);
  for (const auto& c : advt::testing::primitive_cases()) {
    CAPTURE(c.name);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Tensor> inputs;
      for (const auto& sh : c.shapes) inputs.push_back(random_tensor(sh, rng, c.lo, c.hi));
      if (std::string_view(c.name) == "stop_gradient") {
        auto grads = advt::testing::analytic_gradients(c.fn, inputs);
        for (std::size_t i = 0; i < inputs[0].size(); ++i) {
          worst = std::max(worst, std::abs(grads[0][i] - advt::testing::entry_weight(i) * inputs[0][i]));
        }
        continue;
      }
      worst = std::max(worst, max_relative_error(c.fn, inputs, 1e-5));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("non-finite values fail fast with the node id") {
  Graph g;
  auto x = g.parameter(Tensor::vector({-1.0, 4.0}));
  try {
    (void)log(x);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("node 1 (log)") != std::string::npos);
  }
  CHECK_THROWS_AS(g.constant(Tensor::vector({std::nan("")})), NumericalError);
}

TEST_CASE("shape errors") {
  Graph g;
  auto a = g.constant(Tensor(Shape{2, 3}));
  auto b = g.constant(Tensor(Shape{2, 2}));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(slice(a, 1, 2, 4), ShapeError);
  CHECK_THROWS_AS(reshape(a, {4}), ShapeError);
  const std::size_t bad[] = {5};
  CHECK_THROWS_AS(gather_rows(a, bad), std::out_of_range);
}

TEST_CASE("dropout") {
  Graph g;
  auto x = g.constant(Tensor(Shape{100000}, 1.0));
  RngStream rng(3);
  CHECK(dropout(x, 0.0, rng, true).id == x.id);
  CHECK(dropout(x, 0.5, rng, false).id == x.id);
  auto y = dropout(x, 0.5, rng, true);
  std::size_t kept = 0;
  for (double v : y.value().data()) {
    if (v != 0.0) {
      ++kept;
      CHECK(v == 2.0);
    }
  }
  CHECK(std::abs(static_cast<double>(kept) / 1e5 - 0.5) < 0.02);
}

TEST_CASE("determinism") {
  auto run = [](std::uint64_t seed) {
    RngStream rng(seed);
    Graph g;
    auto w = g.parameter(advt::testing::random_normal({4, 3}, rng));
    auto x = g.constant(advt::testing::random_normal({5, 4}, rng));
    auto h = dropout(tanh(matmul(x, w)), 0.4, rng, true);
    auto out = kl_categorical(g.constant(Tensor(Shape{5, 3})), h);
    return std::pair{out.value(), g.gradient(out, w)};
  };
  auto [v1, g1] = run(42);
  auto [v2, g2] = run(42);
  CHECK(bitwise_equal(v1, v2));
  CHECK(bitwise_equal(g1, g2));
}

TEST_CASE("rng streams") {
  RngStream a(1), b(1);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c(1);
  CHECK(c.split("x").next_u64() != c.split("y").next_u64());
  CHECK(c.position() == 0);
  double total = 0.0, total_sq = 0.0;
  RngStream n(9);
  for (int i = 0; i < 20000; ++i) {
    const double v = n.normal();
    total += v;
    total_sq += v * v;
  }
  CHECK(std::abs(total / 20000) < 0.03);
  CHECK(std::abs(total_sq / 20000 - 1.0) < 0.05);
}
