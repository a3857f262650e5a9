#pragma once

#include <string>
#include <utility>

#include "skelctx/attention.hpp"
#include "skelctx/ops.hpp"
#include "skelctx/optimizer.hpp"

namespace skelctx {

struct FusionConfig {
  std::size_t c_feat = 64;  // skeleton-side width
  std::size_t d = 64;       // text-side width; also the internal fusion width
  std::size_t heads = 4;
  std::size_t ff_hidden = 128;
};

// Bi-directional cross-modal block: one cross-attention per direction (no
// shared weights), then per-stream self-attention and feed-forward, with a
// residual connection and layer norm around each block.
struct FusionParams {
  FusionConfig cfg;
  Tensor in_x_w, in_x_b;  // C_feat -> d
  Tensor in_t_w, in_t_b;  // d -> d
  MhaParams cross_x, cross_t;
  LayerNormParams ln_cross_x, ln_cross_t;
  MhaParams self_x, self_t;
  LayerNormParams ln_self_x, ln_self_t;
  FeedForwardParams ff_x, ff_t;
  LayerNormParams ln_ff_x, ln_ff_t;
  Tensor out_x_w, out_x_b;  // d -> C_feat

  static FusionParams create(const FusionConfig& cfg, ParameterStore& store,
                             std::mt19937_64& rng) {
    FusionParams p;
    p.cfg = cfg;
    const double sx = 1.0 / std::sqrt(double(cfg.c_feat));
    const double sd = 1.0 / std::sqrt(double(cfg.d));
    p.in_x_w = store.add("fusion.in_x.w", Tensor::randn({cfg.d, cfg.c_feat}, sx, rng));
    p.in_x_b = store.add("fusion.in_x.b", Tensor::zeros({cfg.d}));
    p.in_t_w = store.add("fusion.in_t.w", Tensor::randn({cfg.d, cfg.d}, sd, rng));
    p.in_t_b = store.add("fusion.in_t.b", Tensor::zeros({cfg.d}));
    p.cross_x = MhaParams::create("fusion.cross_x", cfg.d, cfg.heads, store, rng);
    p.cross_t = MhaParams::create("fusion.cross_t", cfg.d, cfg.heads, store, rng);
    p.ln_cross_x = LayerNormParams::create("fusion.ln_cross_x", cfg.d, store);
    p.ln_cross_t = LayerNormParams::create("fusion.ln_cross_t", cfg.d, store);
    p.self_x = MhaParams::create("fusion.self_x", cfg.d, cfg.heads, store, rng);
    p.self_t = MhaParams::create("fusion.self_t", cfg.d, cfg.heads, store, rng);
    p.ln_self_x = LayerNormParams::create("fusion.ln_self_x", cfg.d, store);
    p.ln_self_t = LayerNormParams::create("fusion.ln_self_t", cfg.d, store);
    p.ff_x = FeedForwardParams::create("fusion.ff_x", cfg.d, cfg.ff_hidden, store, rng);
    p.ff_t = FeedForwardParams::create("fusion.ff_t", cfg.d, cfg.ff_hidden, store, rng);
    p.ln_ff_x = LayerNormParams::create("fusion.ln_ff_x", cfg.d, store);
    p.ln_ff_t = LayerNormParams::create("fusion.ln_ff_t", cfg.d, store);
    p.out_x_w = store.add("fusion.out_x.w", Tensor::randn({cfg.c_feat, cfg.d}, sd, rng));
    p.out_x_b = store.add("fusion.out_x.b", Tensor::zeros({cfg.c_feat}));
    return p;
  }
};

// Tail of one stream after its cross-attention stage: self-attention block and
// feed-forward block, each residual + layer norm.
inline Tensor fusion_stream_tail(const Tensor& x, const MhaParams& self,
                                 const LayerNormParams& ln_self,
                                 const FeedForwardParams& ff,
                                 const LayerNormParams& ln_ff) {
  Tensor h = apply_ln(add(x, multi_head_attention(x, x, self)), ln_self);
  return apply_ln(add(h, feed_forward(h, ff)), ln_ff);
}

// Queries from one modality, keys/values from the other, in both directions;
// returns (f_ctx [N x C_feat], h_ctx [L x d]).
inline std::pair<Tensor, Tensor> cross_modal_fuse(const Tensor& f_diff,
                                                  const Tensor& h_t,
                                                  const FusionParams& p) {
  if (f_diff.rank() != 2 || f_diff.dim(1) != p.cfg.c_feat)
    throw std::invalid_argument("cross_modal_fuse: skeleton input must be N x C_feat");
  if (h_t.rank() != 2 || h_t.dim(1) != p.cfg.d)
    throw std::invalid_argument("cross_modal_fuse: text input must be L x d");
  Tensor x0 = linear(f_diff, p.in_x_w, p.in_x_b);
  Tensor t0 = linear(h_t, p.in_t_w, p.in_t_b);

  Tensor x1 = apply_ln(add(x0, multi_head_attention(x0, t0, p.cross_x)), p.ln_cross_x);
  Tensor t1 = apply_ln(add(t0, multi_head_attention(t0, x0, p.cross_t)), p.ln_cross_t);

  Tensor x3 = fusion_stream_tail(x1, p.self_x, p.ln_self_x, p.ff_x, p.ln_ff_x);
  Tensor t3 = fusion_stream_tail(t1, p.self_t, p.ln_self_t, p.ff_t, p.ln_ff_t);

  Tensor f_ctx = linear(x3, p.out_x_w, p.out_x_b);
  return {f_ctx, t3};
}

}  // namespace skelctx
