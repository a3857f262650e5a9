#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "skelctx/gradcheck.hpp"
#include "skelctx/ops.hpp"
#include "skelctx/optimizer.hpp"
#include "skelctx/rng.hpp"

using namespace skelctx;

namespace {

void fill_grad(Parameter& p, double g) {
  p.value.ensure_grad();
  for (double& v : p.value.grad()) v = g;
}

}  // namespace

TEST_CASE("sgd with zero learning rate leaves parameters unchanged") {
  ParameterStore store;
  store.add("w", Tensor::from_values({3}, {1.0, -2.0, 0.5}));
  fill_grad(*store.params()[0], 7.3);
  const auto before = store.params()[0]->value.data();
  sgd_step(store, 0.0, 0.9, 0.0005);
  REQUIRE(store.params()[0]->value.data() == before);
}

TEST_CASE("plain sgd arithmetic") {
  ParameterStore store;
  store.add("w", Tensor::from_values({1}, {1.0}));
  fill_grad(*store.params()[0], 0.5);
  sgd_step(store, 0.1, 0.0, 0.0);
  REQUIRE(store.params()[0]->value.at(0) == Catch::Approx(0.95).margin(1e-15));
}

TEST_CASE("momentum recurrence matches hand unroll") {
  // v1 = g; w1 = w0 - lr v1; v2 = m v1 + g; w2 = w1 - lr v2
  const double g = 0.3, lr = 0.05, m = 0.9, w0 = 2.0;
  const double v1 = g;
  const double w1 = w0 - lr * v1;
  const double v2 = m * v1 + g;
  const double w2 = w1 - lr * v2;

  ParameterStore store;
  store.add("w", Tensor::from_values({1}, {w0}));
  fill_grad(*store.params()[0], g);
  sgd_step(store, lr, m, 0.0);
  REQUIRE(store.params()[0]->value.at(0) == Catch::Approx(w1).margin(1e-15));
  fill_grad(*store.params()[0], g);
  sgd_step(store, lr, m, 0.0);
  REQUIRE(store.params()[0]->value.at(0) == Catch::Approx(w2).margin(1e-15));
}

TEST_CASE("weight decay enters the velocity") {
  const double wd = 0.0005, lr = 0.1, w0 = 4.0;
  ParameterStore store;
  store.add("w", Tensor::from_values({1}, {w0}));
  fill_grad(*store.params()[0], 0.0);
  sgd_step(store, lr, 0.0, wd);
  REQUIRE(store.params()[0]->value.at(0) == Catch::Approx(w0 - lr * wd * w0).margin(1e-15));
}

TEST_CASE("missing gradient on a trainable parameter is an error") {
  ParameterStore store;
  store.add("w", Tensor::from_values({2}, {1.0, 2.0}));
  REQUIRE_THROWS_AS(sgd_step(store, 0.1, 0.9, 0.0), std::runtime_error);
  store.ensure_grads_allocated();
  REQUIRE_NOTHROW(sgd_step(store, 0.1, 0.9, 0.0));
}

TEST_CASE("gradients are zeroed after a step") {
  ParameterStore store;
  store.add("w", Tensor::from_values({2}, {1.0, 2.0}));
  fill_grad(*store.params()[0], 1.5);
  sgd_step(store, 0.1, 0.9, 0.0);
  for (double v : store.params()[0]->value.grad()) REQUIRE(v == 0.0);
}

TEST_CASE("duplicate parameter names are rejected") {
  ParameterStore store;
  store.add("w", Tensor::zeros({1}));
  REQUIRE_THROWS_AS(store.add("w", Tensor::zeros({1})), std::invalid_argument);
}

TEST_CASE("check_gradient on sum of squares is nearly exact") {
  auto rng = make_rng(31, "gc-quad");
  Tensor x = Tensor::randn({6}, 1.0, rng);
  double err = check_gradient([](const Tensor& t) { return sum(mul(t, t)); }, x, 1e-5);
  REQUIRE(err < 1e-7);
}

TEST_CASE("check_gradient through layer_norm of matmul") {
  auto rng = make_rng(37, "gc-comp");
  Tensor x = Tensor::randn({4, 4}, 1.0, rng);
  Tensor w = Tensor::randn({4, 4}, 1.0, rng);
  Tensor gamma = Tensor::randn({4}, 1.0, rng);
  Tensor beta = Tensor::randn({4}, 1.0, rng);
  double err = check_gradient_multi(
      [&] { return sum(layer_norm(matmul(x, w), gamma, beta, 1e-5)); }, {x, w},
      1e-5);
  REQUIRE(err < 1e-4);
}

TEST_CASE("check_gradient of a constant function is zero") {
  auto rng = make_rng(41, "gc-const");
  Tensor x = Tensor::randn({5}, 1.0, rng);
  double err = check_gradient(
      [](const Tensor& t) { return scale(sum(mul(t, Tensor::zeros(t.shape()))), 1.0); },
      x, 1e-5);
  REQUIRE(err == 0.0);
}

TEST_CASE("check_gradient validates its step size") {
  Tensor x = Tensor::zeros({2});
  REQUIRE_THROWS_AS(
      check_gradient([](const Tensor& t) { return sum(t); }, x, 1e-2),
      std::invalid_argument);
}
