#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "skelctx/ops.hpp"
#include "skelctx/optimizer.hpp"

namespace skelctx {

struct LayerNormParams {
  Tensor gamma, beta;

  static LayerNormParams create(const std::string& prefix, std::size_t d,
                                ParameterStore& store) {
    LayerNormParams p;
    p.gamma = store.add(prefix + ".gamma", Tensor::filled({d}, 1.0));
    p.beta = store.add(prefix + ".beta", Tensor::zeros({d}));
    return p;
  }
};

inline Tensor apply_ln(const Tensor& x, const LayerNormParams& p) {
  return layer_norm(x, p.gamma, p.beta);
}

struct MhaParams {
  std::size_t heads = 4;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  static MhaParams create(const std::string& prefix, std::size_t d, std::size_t heads,
                          ParameterStore& store, std::mt19937_64& rng) {
    if (d % heads != 0)
      throw std::invalid_argument("attention width must divide into heads");
    MhaParams p;
    p.heads = heads;
    const double s = 1.0 / std::sqrt(double(d));
    p.wq = store.add(prefix + ".wq", Tensor::randn({d, d}, s, rng));
    p.bq = store.add(prefix + ".bq", Tensor::zeros({d}));
    p.wk = store.add(prefix + ".wk", Tensor::randn({d, d}, s, rng));
    p.bk = store.add(prefix + ".bk", Tensor::zeros({d}));
    p.wv = store.add(prefix + ".wv", Tensor::randn({d, d}, s, rng));
    p.bv = store.add(prefix + ".bv", Tensor::zeros({d}));
    p.wo = store.add(prefix + ".wo", Tensor::randn({d, d}, s, rng));
    p.bo = store.add(prefix + ".bo", Tensor::zeros({d}));
    return p;
  }
};

// Scaled dot-product attention; queries from q_in, keys and values from kv_in.
inline Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in,
                                   const MhaParams& p) {
  const std::size_t d = p.wq.dim(0);
  const std::size_t dh = d / p.heads;
  Tensor q = linear(q_in, p.wq, p.bq);
  Tensor k = linear(kv_in, p.wk, p.bk);
  Tensor v = linear(kv_in, p.wv, p.bv);
  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
    heads.push_back(matmul(softmax(scores, 1), vh));
  }
  return linear(concat_cols(heads), p.wo, p.bo);
}

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;

  static FeedForwardParams create(const std::string& prefix, std::size_t d,
                                  std::size_t hidden, ParameterStore& store,
                                  std::mt19937_64& rng) {
    FeedForwardParams p;
    p.w1 = store.add(prefix + ".w1", Tensor::randn({hidden, d}, 1.0 / std::sqrt(double(d)), rng));
    p.b1 = store.add(prefix + ".b1", Tensor::zeros({hidden}));
    p.w2 = store.add(prefix + ".w2",
                     Tensor::randn({d, hidden}, 1.0 / std::sqrt(double(hidden)), rng));
    p.b2 = store.add(prefix + ".b2", Tensor::zeros({d}));
    return p;
  }
};

inline Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  return linear(tanh(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

}  // namespace skelctx
