#pragma once

#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "skelctx/attention.hpp"
#include "skelctx/context_bank.hpp"
#include "skelctx/ops.hpp"
#include "skelctx/optimizer.hpp"
#include "skelctx/rng.hpp"

namespace skelctx {

struct LmConfig {
  std::size_t vocab_size = 0;
  std::size_t d = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_hidden = 256;
  std::size_t max_len = 16;
};

struct LmLayer {
  LayerNormParams ln1, ln2;
  MhaParams attn;
  FeedForwardParams ff;
};

// From-scratch masked-token transformer standing in for the pretrained
// language model: token + position embeddings, pre-norm self-attention blocks
// and a vocabulary-width decoder head.
struct LmParams {
  LmConfig cfg;
  Tensor tok_emb;  // |V| x d
  Tensor pos_emb;  // L_max x d
  std::vector<LmLayer> layers;
  Tensor mlm_w, mlm_b;  // d -> |V|

  static LmParams create(const LmConfig& cfg, ParameterStore& store,
                         std::mt19937_64& rng) {
    LmParams p;
    p.cfg = cfg;
    const double s = 0.1;
    p.tok_emb = store.add("lm.tok_emb", Tensor::randn({cfg.vocab_size, cfg.d}, s, rng));
    p.pos_emb = store.add("lm.pos_emb", Tensor::randn({cfg.max_len, cfg.d}, s, rng));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string pre = "lm.layer" + std::to_string(l);
      LmLayer layer;
      layer.ln1 = LayerNormParams::create(pre + ".ln1", cfg.d, store);
      layer.attn = MhaParams::create(pre + ".attn", cfg.d, cfg.heads, store, rng);
      layer.ln2 = LayerNormParams::create(pre + ".ln2", cfg.d, store);
      layer.ff = FeedForwardParams::create(pre + ".ff", cfg.d, cfg.ff_hidden, store, rng);
      p.layers.push_back(std::move(layer));
    }
    p.mlm_w = store.add("lm.mlm.w",
                        Tensor::randn({cfg.vocab_size, cfg.d}, 1.0 / std::sqrt(double(cfg.d)), rng));
    p.mlm_b = store.add("lm.mlm.b", Tensor::zeros({cfg.vocab_size}));
    return p;
  }
};

inline Tensor lm_encode_ids(const std::vector<std::size_t>& ids, const LmParams& p) {
  if (ids.empty()) throw std::invalid_argument("lm_encode: empty prompt");
  if (ids.size() > p.cfg.max_len)
    throw std::invalid_argument("lm_encode: prompt longer than positional table");
  for (std::size_t id : ids)
    if (id >= p.cfg.vocab_size) throw std::invalid_argument("lm_encode: unknown token id");
  std::vector<std::size_t> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  Tensor h = add(gather_rows(p.tok_emb, ids), gather_rows(p.pos_emb, positions));
  for (const LmLayer& layer : p.layers) {
    h = add(h, multi_head_attention(apply_ln(h, layer.ln1), apply_ln(h, layer.ln1),
                                    layer.attn));
    h = add(h, feed_forward(apply_ln(h, layer.ln2), layer.ff));
  }
  return h;  // L x d
}

inline Tensor lm_encode(const PromptState& prompt, const LmParams& p) {
  return lm_encode_ids(prompt.token_ids, p);
}

inline Tensor mlm_logits(const Tensor& hidden, const LmParams& p) {
  return linear(hidden, p.mlm_w, p.mlm_b);
}

// Masked-context reconstruction loss: mean cross entropy of the decoder head at
// the masked positions against the ground-truth slot tokens (softmax over the
// whole vocabulary).
inline Tensor ccr_loss(const Tensor& h_ctx, const std::vector<std::size_t>& masked_positions,
                       const std::vector<std::size_t>& target_ids, const LmParams& p) {
  if (masked_positions.empty())
    throw std::invalid_argument("ccr_loss: empty mask set (skip the loss when m = 0)");
  if (masked_positions.size() != target_ids.size())
    throw std::invalid_argument("ccr_loss: positions and targets must align");
  Tensor picked = gather_rows(h_ctx, masked_positions);
  return cross_entropy(mlm_logits(picked, p), target_ids);
}

struct PretrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t steps = 0;
};

// Standard masked-token pretraining over all bank prompts: each position is
// masked with probability 0.15 (at least one per prompt), target is the
// original token. Optimizes only the parameters created for the LM.
inline PretrainResult pretrain_language_model(
    const ContextBank& bank, LmParams& p,
    std::vector<std::shared_ptr<Parameter>> lm_params, std::size_t steps,
    std::mt19937_64& rng, std::size_t batch = 8, double lr = 0.5, double momentum = 0.9) {
  std::vector<PromptState> prompts;
  for (const auto& d : bank.descriptions())
    prompts.push_back(build_prompt(d, bank.vocab()));

  PretrainResult result;
  result.steps = steps;
  std::uniform_int_distribution<std::size_t> pick(0, prompts.size() - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t step = 0; step < steps; ++step) {
    Tensor loss;
    for (std::size_t b = 0; b < batch; ++b) {
      const PromptState& prompt = prompts[pick(rng)];
      std::vector<std::size_t> ids = prompt.token_ids;
      std::vector<std::size_t> positions;
      std::vector<std::size_t> targets;
      for (std::size_t i = 0; i < ids.size(); ++i)
        if (coin(rng) < 0.15) {
          positions.push_back(i);
          targets.push_back(ids[i]);
          ids[i] = Vocabulary::kMask;
        }
      if (positions.empty()) {
        std::uniform_int_distribution<std::size_t> pos(0, ids.size() - 1);
        const std::size_t i = pos(rng);
        positions.push_back(i);
        targets.push_back(ids[i]);
        ids[i] = Vocabulary::kMask;
      }
      Tensor h = lm_encode_ids(ids, p);
      Tensor sample_loss = cross_entropy(mlm_logits(gather_rows(h, positions), p), targets);
      loss = loss.defined() ? add(loss, sample_loss) : sample_loss;
    }
    loss = scale(loss, 1.0 / double(batch));
    if (step == 0) result.initial_loss = loss.value();
    result.final_loss = loss.value();
    loss.backward();
    for (auto& param : lm_params) param->value.ensure_grad();
    sgd_step(lm_params, lr, momentum, 0.0);
  }
  return result;
}

}  // namespace skelctx
