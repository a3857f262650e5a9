#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "skelctx/context_bank.hpp"
#include "skelctx/ops.hpp"
#include "skelctx/optimizer.hpp"

namespace skelctx {

enum class EmbedKind { kContext, kAction };

// Trainable semantic encoder: a dedicated token-embedding table pooled over the
// relevant description fields, projected by psi and L2-normalized. The context
// kind reads {environment, used_object, target_object}; the action kind reads
// {body_part, subaction}.
struct AlignParams {
  std::size_t d_sem = 64;
  Tensor sem_emb;           // |V| x d_sem
  Tensor psi_w, psi_b;      // d_sem -> d_sem
  Tensor phi_c_w, phi_c_b;  // C_feat -> d_sem
  Tensor phi_p_w, phi_p_b;  // C_feat -> d_sem
  Tensor tau;               // learnable temperature, clamped to [0.01, 100]

  static constexpr double kTauMin = 0.01;
  static constexpr double kTauMax = 100.0;

  static AlignParams create(std::size_t vocab_size, std::size_t c_feat,
                            std::size_t d_sem, ParameterStore& store,
                            std::mt19937_64& rng) {
    AlignParams p;
    p.d_sem = d_sem;
    p.sem_emb = store.add("align.sem_emb", Tensor::randn({vocab_size, d_sem}, 0.1, rng));
    const double ss = 1.0 / std::sqrt(double(d_sem));
    const double sc = 1.0 / std::sqrt(double(c_feat));
    p.psi_w = store.add("align.psi.w", Tensor::randn({d_sem, d_sem}, ss, rng));
    p.psi_b = store.add("align.psi.b", Tensor::zeros({d_sem}));
    p.phi_c_w = store.add("align.phi_c.w", Tensor::randn({d_sem, c_feat}, sc, rng));
    p.phi_c_b = store.add("align.phi_c.b", Tensor::zeros({d_sem}));
    p.phi_p_w = store.add("align.phi_p.w", Tensor::randn({d_sem, c_feat}, sc, rng));
    p.phi_p_b = store.add("align.phi_p.b", Tensor::zeros({d_sem}));
    p.tau = store.add("align.tau", Tensor::from_values({1}, {0.07}));
    return p;
  }

  void clamp_tau() {
    double& t = tau.data()[0];
    t = std::clamp(t, kTauMin, kTauMax);
  }
};

inline Tensor semantic_embed(const ContextDescription& desc, EmbedKind kind,
                             const AlignParams& p, const Vocabulary& vocab) {
  std::vector<std::size_t> ids;
  if (kind == EmbedKind::kContext)
    ids = {vocab.id(desc.environment), vocab.id(desc.used_object),
           vocab.id(desc.target_object)};
  else
    ids = {vocab.id(desc.body_part), vocab.id(desc.subaction)};
  Tensor pooled = mean_rows(gather_rows(p.sem_emb, ids));
  return l2_normalize_rows(linear(pooled, p.psi_w, p.psi_b));
}

// Context embeddings restricted to a slot subset (prompt-slot ablation); the
// action kind is unaffected.
inline Tensor semantic_embed_slots(const ContextDescription& desc,
                                   const std::vector<Slot>& slots,
                                   const AlignParams& p, const Vocabulary& vocab) {
  if (slots.empty()) throw std::invalid_argument("semantic_embed_slots: no slots");
  std::vector<std::size_t> ids;
  for (Slot s : slots) ids.push_back(vocab.id(slot_field(desc, s)));
  Tensor pooled = mean_rows(gather_rows(p.sem_emb, ids));
  return l2_normalize_rows(linear(pooled, p.psi_w, p.psi_b));
}

// Mean over all non-channel axes.
inline Tensor pool_features(const Tensor& features) {
  return mean_rows(features);
}

inline Tensor project_unit(const Tensor& pooled, const Tensor& w, const Tensor& b) {
  return l2_normalize_rows(linear(pooled, w, b));
}

// Dual contrastive loss over the seen classes: cosine similarities through the
// stream projections, temperature-scaled, cross entropy against the true
// class in both the context and part streams.
inline Tensor align_loss(const Tensor& pooled_ctx, const Tensor& pooled_p,
                         const std::vector<Tensor>& class_ctx_embeds,
                         const std::vector<Tensor>& class_part_embeds,
                         std::size_t true_index, const AlignParams& p) {
  if (class_ctx_embeds.empty() || class_ctx_embeds.size() != class_part_embeds.size())
    throw std::invalid_argument("align_loss: malformed class embedding sets");
  if (true_index >= class_ctx_embeds.size())
    throw std::invalid_argument("align_loss: true class not in the seen set");
  Tensor u_c = project_unit(pooled_ctx, p.phi_c_w, p.phi_c_b);
  Tensor u_p = project_unit(pooled_p, p.phi_p_w, p.phi_p_b);
  Tensor z_c = stack_rows(class_ctx_embeds);
  Tensor z_p = stack_rows(class_part_embeds);
  const std::size_t k = class_ctx_embeds.size();
  Tensor logits_c = reshape(div_by_scalar(matvec(z_c, u_c), p.tau), {1, k});
  Tensor logits_p = reshape(div_by_scalar(matvec(z_p, u_p), p.tau), {1, k});
  return add(cross_entropy(logits_c, {true_index}), cross_entropy(logits_p, {true_index}));
}

// Weighted total objective; default weights (1, 1, 1). Undefined component
// tensors stand for terms disabled by a toggle and contribute nothing.
inline Tensor total_loss(const Tensor& l_align, const Tensor& l_ccr, const Tensor& l_kpd,
                         double w_align = 1.0, double w_ccr = 1.0, double w_kpd = 1.0) {
  Tensor total;
  auto accumulate = [&total](const Tensor& term, double w) {
    if (!term.defined() || w == 0.0) return;
    if (!std::isfinite(term.value()))
      throw std::runtime_error("total_loss: non-finite component");
    Tensor weighted = w == 1.0 ? term : scale(term, w);
    total = total.defined() ? add(total, weighted) : weighted;
  };
  accumulate(l_align, w_align);
  accumulate(l_ccr, w_ccr);
  accumulate(l_kpd, w_kpd);
  if (!total.defined()) total = Tensor::zeros({1});
  return total;
}

}  // namespace skelctx
