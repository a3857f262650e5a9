#include <catch2/catch_amalgamated.hpp>

#include "skelctx/encoder.hpp"
#include "skelctx/gradcheck.hpp"
#include "skelctx/rng.hpp"

using namespace skelctx;

namespace {

AdjacencyTable ring_adjacency(std::size_t v) {
  AdjacencyTable t;
  t.num_joints = v;
  for (std::size_t i = 0; i + 1 < v; ++i) t.edges.emplace_back(i, i + 1);
  return t;
}

EncoderParams small_encoder(ParameterStore& store, std::size_t v = 5, std::size_t c = 6,
                            std::uint64_t seed = 0) {
  EncoderConfig cfg;
  cfg.num_joints = v;
  cfg.c_feat = c;
  auto rng = make_rng(seed, "enc-test");
  return EncoderParams::create(cfg, ring_adjacency(v), store, rng);
}

}  // namespace

TEST_CASE("encode produces T'=16 and rejects bad inputs") {
  ParameterStore store;
  EncoderParams enc = small_encoder(store);
  Tensor x = Tensor::zeros({64, 5, 3});
  Tensor y = encode(x, enc);
  REQUIRE(y.shape() == std::vector<std::size_t>{16, 5, 6});
  REQUIRE(y.all_finite());

  REQUIRE_THROWS_AS(encode(Tensor::zeros({64, 4, 3}), enc), std::invalid_argument);
  REQUIRE_THROWS_AS(encode(Tensor::zeros({32, 5, 3}), enc), std::invalid_argument);
}

TEST_CASE("encode of zero input is the bias-only forward, deterministic") {
  ParameterStore store;
  EncoderParams enc = small_encoder(store);
  Tensor a = encode(Tensor::zeros({64, 5, 3}), enc);
  Tensor b = encode(Tensor::zeros({64, 5, 3}), enc);
  REQUIRE(a.data() == b.data());
}

TEST_CASE("constant pose is invariant to frame permutation") {
  ParameterStore store;
  EncoderParams enc = small_encoder(store);
  auto rng = make_rng(5, "pose");
  std::vector<double> pose(5 * 3);
  for (double& v : pose) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  std::vector<double> frames;
  for (int t = 0; t < 64; ++t) frames.insert(frames.end(), pose.begin(), pose.end());
  Tensor x = Tensor::from_values({64, 5, 3}, frames);
  // A constant sequence equals any of its frame permutations.
  Tensor y1 = encode(x, enc);
  std::swap_ranges(frames.begin(), frames.begin() + 15, frames.begin() + 30 * 15);
  Tensor y2 = encode(Tensor::from_values({64, 5, 3}, frames), enc);
  REQUIRE(y1.data() == y2.data());
}

TEST_CASE("encoder gradients pass finite differences") {
  ParameterStore store;
  EncoderParams enc = small_encoder(store, 4, 4, 7);
  auto rng = make_rng(9, "enc-grad");
  Tensor x = Tensor::randn({64, 4, 3}, 0.5, rng);
  Tensor w = Tensor::randn({16, 4, 4}, 1.0, rng);  // weighting keeps f non-degenerate
  std::vector<Tensor> wrt = {enc.lift1_w, enc.lift1_b, enc.conv1_w, enc.conv1_b,
                             enc.lift2_w, enc.lift2_b, enc.conv2_w, enc.conv2_b};
  const double err = check_gradient_multi(
      [&] { return sum(mul(encode(x, enc), w)); }, wrt, 1e-5);
  REQUIRE(err < 1e-4);
}

TEST_CASE("pool_topology averages the temporal axis") {
  Tensor two_frames = Tensor::from_values({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor pooled = pool_topology(two_frames);
  REQUIRE(pooled.shape() == std::vector<std::size_t>{2, 2});
  REQUIRE(pooled.at(0, 0) == Catch::Approx(3.0));
  REQUIRE(pooled.at(0, 1) == Catch::Approx(4.0));
  REQUIRE(pooled.at(1, 0) == Catch::Approx(5.0));
  REQUIRE(pooled.at(1, 1) == Catch::Approx(6.0));

  SECTION("time-constant features pool to a single frame") {
    Tensor constant = Tensor::from_values({3, 1, 2}, {4, 5, 4, 5, 4, 5});
    Tensor p = pool_topology(constant);
    REQUIRE(p.at(0, 0) == 4.0);
    REQUIRE(p.at(0, 1) == 5.0);
  }
  SECTION("single frame is the identity") {
    Tensor one = Tensor::from_values({1, 2, 2}, {1, 2, 3, 4});
    REQUIRE(pool_topology(one).data() == std::vector<double>{1, 2, 3, 4});
  }
}

TEST_CASE("dje residual identity with zero value projection") {
  ParameterStore store;
  auto rng = make_rng(11, "dje");
  DjeParams dje = DjeParams::create(6, store, rng);
  for (double& v : dje.wv.data()) v = 0.0;
  Tensor f = Tensor::randn({5, 6}, 1.0, rng);
  Tensor out = dje_forward(f, dje);
  REQUIRE(out.data() == f.data());  // exact residual passthrough
}

TEST_CASE("dje matches hand computation on a 1-joint, 2-channel toy") {
  ParameterStore store;
  auto rng = make_rng(13, "dje-toy");
  DjeParams dje = DjeParams::create(2, store, rng);
  Tensor f = Tensor::from_values({1, 2}, {0.3, -0.7});
  // Hand computation: LN row of [0.3,-0.7] -> [1,-1] scaled by 1/sqrt(var+eps).
  const double mean = -0.2;
  const double var = (0.5 * 0.5 + 0.5 * 0.5) / 1.0 / 2.0 * 2.0;  // 0.25
  const double inv = 1.0 / std::sqrt(0.25 + 1e-5);
  const double ln0 = (0.3 - mean) * inv * dje.ln_gamma.at(0) + dje.ln_beta.at(0);
  const double ln1 = (-0.7 - mean) * inv * dje.ln_gamma.at(1) + dje.ln_beta.at(1);
  auto proj = [&](const Tensor& w, std::size_t row) {
    return ln0 * w.at(row, 0) + ln1 * w.at(row, 1);
  };
  const double hq0 = proj(dje.wq, 0), hq1 = proj(dje.wq, 1);
  const double hk0 = proj(dje.wk, 0), hk1 = proj(dje.wk, 1);
  const double hv0 = proj(dje.wv, 0), hv1 = proj(dje.wv, 1);
  const double a0 = std::tanh(hq0 - hk0), a1 = std::tanh(hq1 - hk1);
  const double expect0 = a0 * hv0 + 0.3;
  const double expect1 = a1 * hv1 - 0.7;
  Tensor out = dje_forward(f, dje);
  REQUIRE(out.at(0, 0) == Catch::Approx(expect0).epsilon(1e-12));
  REQUIRE(out.at(0, 1) == Catch::Approx(expect1).epsilon(1e-12));
}

TEST_CASE("dje attention is antisymmetric with identity activation and W_Q == W_K") {
  ParameterStore store;
  auto rng = make_rng(17, "dje-anti");
  DjeParams dje = DjeParams::create(4, store, rng);
  dje.wk.data() = dje.wq.data();
  dje.tanh_activation = false;
  Tensor f = Tensor::randn({5, 4}, 1.0, rng);
  Tensor a = dje_attention(f, dje);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t c = 0; c < 4; ++c)
        REQUIRE(a.at(i, j, c) == Catch::Approx(-a.at(j, i, c)).margin(1e-12));
}

TEST_CASE("dje output shape equals input shape") {
  ParameterStore store;
  auto rng = make_rng(19, "dje-shape");
  for (std::size_t n : {1u, 3u, 7u}) {
    ParameterStore local;
    DjeParams dje = DjeParams::create(5, local, rng);
    Tensor f = Tensor::randn({n, 5}, 1.0, rng);
    REQUIRE(dje_forward(f, dje).shape() == f.shape());
  }
}

TEST_CASE("dje is permutation equivariant") {
  ParameterStore store;
  auto rng = make_rng(23, "dje-perm");
  DjeParams dje = DjeParams::create(4, store, rng);
  Tensor f = Tensor::randn({6, 4}, 1.0, rng);
  Tensor out = dje_forward(f, dje);
  // Reverse the joint order.
  std::vector<double> rev(6 * 4);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 4; ++c) rev[i * 4 + c] = f.at(5 - i, c);
  Tensor out_rev = dje_forward(Tensor::from_values({6, 4}, rev), dje);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 4; ++c)
      REQUIRE(out_rev.at(i, c) == Catch::Approx(out.at(5 - i, c)).margin(1e-12));
}

TEST_CASE("dje gradients pass finite differences") {
  ParameterStore store;
  auto rng = make_rng(29, "dje-grad");
  DjeParams dje = DjeParams::create(3, store, rng);
  Tensor f = Tensor::randn({4, 3}, 1.0, rng);
  Tensor w = Tensor::randn({4, 3}, 1.0, rng);
  const double err = check_gradient_multi(
      [&] { return sum(mul(dje_forward(f, dje), w)); },
      {f, dje.wq, dje.wk, dje.wv, dje.ln_gamma, dje.ln_beta}, 1e-5);
  REQUIRE(err < 1e-4);
}

TEST_CASE("adjacency loader validates entries") {
  const std::string path = default_data_dir() + "/adjacency.json";
  AdjacencyTable t = load_adjacency(path, 25);
  REQUIRE(t.edges.size() == 24);
  REQUIRE_THROWS_WITH(load_adjacency(path, 17),
                      Catch::Matchers::ContainsSubstring("no entry"));

  const auto norm = normalized_adjacency(t);
  REQUIRE(norm.size() == 25 * 25);
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t j = 0; j < 25; ++j)
      REQUIRE(norm[i * 25 + j] == Catch::Approx(norm[j * 25 + i]));  // symmetric
}
