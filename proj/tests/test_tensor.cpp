#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "skelctx/gradcheck.hpp"
#include "skelctx/ops.hpp"
#include "skelctx/rng.hpp"
#include "skelctx/tensor.hpp"

using namespace skelctx;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                     double stddev = 1.0) {
  return Tensor::randn(std::move(shape), stddev, rng);
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  REQUIRE(t.numel() == 6);
  REQUIRE(t.shape() == std::vector<std::size_t>{2, 3});
  REQUIRE(t.at(1, 2) == 6.0);
  REQUIRE(t.all_finite());
  REQUIRE_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), std::invalid_argument);
  REQUIRE_THROWS_AS(t.value(), std::invalid_argument);
}

TEST_CASE("layer_norm constant vector maps to zeros") {
  Tensor x = Tensor::from_values({3}, {5, 5, 5});
  Tensor y = layer_norm(x, Tensor{}, Tensor{}, 1e-5);
  for (double v : y.data()) REQUIRE(v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("layer_norm matches hand computation on [1,2,3]") {
  Tensor x = Tensor::from_values({3}, {1, 2, 3});
  Tensor y = layer_norm(x, Tensor{}, Tensor{}, 1e-12);
  const double s = std::sqrt(2.0 / 3.0);
  REQUIRE(y.at(0) == Catch::Approx(-1.0 / s).epsilon(1e-6));
  REQUIRE(y.at(1) == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(y.at(2) == Catch::Approx(1.0 / s).epsilon(1e-6));
  REQUIRE(y.at(2) == Catch::Approx(1.2247448714).epsilon(1e-6));
}

TEST_CASE("layer_norm rows have zero mean and unit variance before affine") {
  auto rng = make_rng(7, "ln-rows");
  Tensor x = random_tensor({5, 16}, rng, 3.0);
  Tensor y = layer_norm(x, Tensor{}, Tensor{}, 1e-12);
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 16; ++c) mean += y.at(r, c);
    mean /= 16.0;
    for (std::size_t c = 0; c < 16; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    var /= 16.0;
    REQUIRE(mean == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(var == Catch::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("layer_norm gradient matches finite differences on 4x8") {
  auto rng = make_rng(11, "ln-grad");
  Tensor x = random_tensor({4, 8}, rng);
  Tensor gamma = random_tensor({8}, rng);
  Tensor beta = random_tensor({8}, rng);
  double err = check_gradient_multi(
      [&] { return sum(layer_norm(x, gamma, beta, 1e-5)); }, {x, gamma, beta}, 1e-5);
  REQUIRE(err < 1e-6);
}

TEST_CASE("layer_norm rejects empty last axis and bad eps") {
  REQUIRE_THROWS_AS(layer_norm(Tensor::zeros({3, 0}), Tensor{}, Tensor{}, 1e-5),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(layer_norm(Tensor::zeros({3}), Tensor{}, Tensor{}, 0.0),
                    std::invalid_argument);
}

TEST_CASE("softmax uniform and exponential identities") {
  Tensor a = softmax(Tensor::from_values({3}, {0, 0, 0}), 0);
  for (double v : a.data()) REQUIRE(v == Catch::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor b = softmax(
      Tensor::from_values({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
  REQUIRE(b.at(0) == Catch::Approx(1.0 / 6.0).epsilon(1e-12));
  REQUIRE(b.at(1) == Catch::Approx(2.0 / 6.0).epsilon(1e-12));
  REQUIRE(b.at(2) == Catch::Approx(3.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("softmax is shift invariant") {
  auto rng = make_rng(3, "softmax-shift");
  Tensor x = random_tensor({4, 6}, rng, 2.0);
  Tensor shifted = Tensor::from_values(x.shape(), x.data());
  for (double& v : shifted.data()) v += 100.0;
  Tensor a = softmax(x, 1);
  Tensor b = softmax(shifted, 1);
  for (std::size_t i = 0; i < a.numel(); ++i)
    REQUIRE(a.data()[i] == Catch::Approx(b.data()[i]).margin(1e-12));
}

TEST_CASE("softmax sums to one along every axis") {
  auto rng = make_rng(5, "softmax-sum");
  const std::vector<std::vector<std::size_t>> shapes = {{7}, {3, 5}, {2, 4, 3}};
  for (const auto& shape : shapes) {
    for (std::size_t axis = 0; axis < shape.size(); ++axis) {
      Tensor x = random_tensor(shape, rng, 4.0);
      Tensor y = softmax(x, axis);
      std::size_t outer = 1, inner = 1;
      for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
      for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
      const std::size_t len = shape[axis];
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          double s = 0.0;
          for (std::size_t a = 0; a < len; ++a)
            s += y.data()[o * len * inner + a * inner + in];
          REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
        }
    }
  }
}

TEST_CASE("cross_entropy uniform logits give ln V") {
  for (std::size_t v : {2, 5, 50}) {
    Tensor logits = Tensor::filled({3, v}, 0.7);
    Tensor loss = cross_entropy(logits, {0, 1 % v, 2 % v});
    REQUIRE(loss.value() == Catch::Approx(std::log(double(v))).margin(1e-9));
  }
}

TEST_CASE("cross_entropy vanishes in the infinite-margin limit") {
  Tensor logits = Tensor::from_values({2, 3}, {60, 0, 0, 0, 60, 0});
  Tensor loss = cross_entropy(logits, {0, 1});
  REQUIRE(loss.value() < 1e-8);
  REQUIRE(loss.value() >= 0.0);
}

TEST_CASE("cross_entropy rejects out-of-range target") {
  Tensor logits = Tensor::zeros({2, 3});
  REQUIRE_THROWS_AS(cross_entropy(logits, {0, 3}), std::invalid_argument);
}

TEST_CASE("cross_entropy gradient matches finite differences on 3x7") {
  auto rng = make_rng(13, "ce-grad");
  Tensor logits = random_tensor({3, 7}, rng);
  double err = check_gradient(
      [](const Tensor& t) {
        return cross_entropy(t, {2, 0, 6});
      },
      logits, 1e-5);
  REQUIRE(err < 1e-6);
}

TEST_CASE("elementwise and matmul gradients across random shapes") {
  auto rng = make_rng(17, "op-grads");
  for (int rep = 0; rep < 3; ++rep) {
    std::uniform_int_distribution<std::size_t> d(2, 5);
    const std::size_t n = d(rng), k = d(rng), m = d(rng);
    Tensor a = random_tensor({n, k}, rng);
    Tensor b = random_tensor({n, k}, rng);
    Tensor w = random_tensor({m, k}, rng);
    Tensor wb = random_tensor({k, m}, rng);
    Tensor bias = random_tensor({k}, rng);

    REQUIRE(check_gradient_multi([&] { return sum(mul(add(a, b), sub(a, b))); }, {a, b},
                                 1e-5) < 1e-6);
    REQUIRE(check_gradient_multi([&] { return sum(matmul(a, wb)); }, {a, wb}, 1e-5) <
            1e-6);
    REQUIRE(check_gradient_multi([&] { return sum(matmul_nt(a, w)); }, {a, w}, 1e-5) <
            1e-6);
    REQUIRE(check_gradient_multi([&] { return sum(tanh(add_bias(a, bias))); }, {a, bias},
                                 1e-5) < 1e-4);
    REQUIRE(check_gradient_multi([&] { return sum(relu(a)); }, {a}, 1e-5) < 1e-4);
    REQUIRE(check_gradient_multi([&] { return sum(mul(softmax(a, 1), b)); }, {a}, 1e-5) <
            1e-4);
    REQUIRE(check_gradient_multi([&] { return mean_all(mul(a, a)); }, {a}, 1e-5) < 1e-6);
  }
}

TEST_CASE("structured op gradients") {
  auto rng = make_rng(19, "struct-grads");
  for (int rep = 0; rep < 3; ++rep) {
    std::uniform_int_distribution<std::size_t> d(2, 4);
    const std::size_t n = d(rng), c = d(rng);
    Tensor q = random_tensor({n, c}, rng);
    Tensor k = random_tensor({n, c}, rng);
    Tensor v = random_tensor({n, c}, rng);
    REQUIRE(check_gradient_multi(
                [&] { return sum(pairwise_contract(tanh(pairwise_diff(q, k)), v)); },
                {q, k, v}, 1e-5) < 1e-4);

    Tensor x = random_tensor({3, n, c}, rng);
    std::vector<double> mix(n * n);
    for (double& m : mix) m = std::uniform_real_distribution<double>(-1, 1)(rng);
    REQUIRE(check_gradient_multi([&] { return sum(adjacency_mix(x, mix, n)); }, {x},
                                 1e-5) < 1e-6);

    Tensor w = random_tensor({c, 3, c}, rng);
    Tensor bias = random_tensor({c}, rng);
    Tensor xin = random_tensor({6, n, c}, rng);
    REQUIRE(check_gradient_multi(
                [&] { return sum(temporal_conv(xin, w, bias, 2)); }, {xin, w, bias},
                1e-5) < 1e-6);

    Tensor rowsw = random_tensor({n * 3}, rng);
    Tensor x2 = random_tensor({n * 3, c}, rng);
    REQUIRE(check_gradient_multi([&] { return sum(scale_channels(x2, rowsw)); },
                                 {x2, rowsw}, 1e-5) < 1e-6);

    Tensor kt = random_tensor({4, n}, rng);
    Tensor kg = random_tensor({n}, rng);
    REQUIRE(check_gradient_multi([&] { return rows_l2_diff_sum(kt, kg); }, {kt, kg},
                                 1e-5) < 1e-4);

    Tensor table = random_tensor({5, c}, rng);
    REQUIRE(check_gradient_multi(
                [&] { return sum(gather_rows(table, {1, 3, 1, 0})); }, {table}, 1e-5) <
            1e-6);

    Tensor wide = random_tensor({n, 6}, rng);
    REQUIRE(check_gradient_multi(
                [&] {
                  return sum(concat_cols({slice_cols(wide, 0, 3), slice_cols(wide, 3, 6)}));
                },
                {wide}, 1e-5) < 1e-6);

    Tensor vvec = random_tensor({c}, rng);
    Tensor mat = random_tensor({n, c}, rng);
    REQUIRE(check_gradient_multi([&] { return sum(matvec(mat, vvec)); }, {mat, vvec},
                                 1e-5) < 1e-6);

    Tensor tau = Tensor::from_values({1}, {0.7});
    REQUIRE(check_gradient_multi([&] { return sum(div_by_scalar(mat, tau)); },
                                 {mat, tau}, 1e-5) < 1e-4);

    Tensor normed = random_tensor({n, c}, rng);
    REQUIRE(check_gradient_multi([&] { return sum(mul(l2_normalize_rows(normed), normed)); },
                                 {normed}, 1e-5) < 1e-4);

    Tensor pooled = random_tensor({n, c}, rng);
    REQUIRE(check_gradient_multi([&] { return sum(mul(mean_rows(pooled), mean_rows(pooled))); },
                                 {pooled}, 1e-5) < 1e-4);
  }
}

TEST_CASE("l2_normalize_rows produces unit rows") {
  auto rng = make_rng(23, "l2norm");
  Tensor x = random_tensor({6, 9}, rng, 5.0);
  Tensor y = l2_normalize_rows(x);
  for (std::size_t r = 0; r < 6; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < 9; ++c) sq += y.at(r, c) * y.at(r, c);
    REQUIRE(std::sqrt(sq) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("forward passes are deterministic") {
  auto rng1 = make_rng(29, "det");
  auto rng2 = make_rng(29, "det");
  Tensor a1 = random_tensor({4, 4}, rng1);
  Tensor a2 = random_tensor({4, 4}, rng2);
  Tensor y1 = softmax(matmul(tanh(a1), a1), 1);
  Tensor y2 = softmax(matmul(tanh(a2), a2), 1);
  REQUIRE(y1.data() == y2.data());
}

TEST_CASE("no-grad mode records no tape") {
  Tensor a = Tensor::from_values({2}, {1, 2}, true);
  NoGradGuard guard;
  Tensor y = sum(mul(a, a));
  REQUIRE_FALSE(y.requires_grad());
  REQUIRE(y.node()->parents.empty());
}
