#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "skelctx/ops.hpp"
#include "skelctx/optimizer.hpp"
#include "skelctx/skeleton_data.hpp"

namespace skelctx {

// Two-layer joint-importance head: per-(frame, joint) feature -> hidden ->
// scalar score, softmax over joints within each frame.
struct KpdParams {
  Tensor w1, b1, w2, b2;

  static KpdParams create(std::size_t c_feat, ParameterStore& store,
                          std::mt19937_64& rng) {
    KpdParams p;
    const std::size_t hidden = std::max<std::size_t>(1, c_feat / 2);
    p.w1 = store.add("kpd.w1",
                     Tensor::randn({hidden, c_feat}, 1.0 / std::sqrt(double(c_feat)), rng));
    p.b1 = store.add("kpd.b1", Tensor::zeros({hidden}));
    p.w2 = store.add("kpd.w2",
                     Tensor::randn({1, hidden}, 1.0 / std::sqrt(double(hidden)), rng));
    p.b2 = store.add("kpd.b2", Tensor::zeros({1}));
    return p;
  }
};

// Returns (K_out [T' x V], F_p [T' x V x C]) with F_p = K_out ⊙ F_x.
inline std::pair<Tensor, Tensor> kpd_forward(const Tensor& f_x, const KpdParams& p) {
  if (f_x.rank() != 3) throw std::invalid_argument("kpd_forward: expects T x V x C");
  const std::size_t t = f_x.dim(0), v = f_x.dim(1), c = f_x.dim(2);
  Tensor flat = reshape(f_x, {t * v, c});
  Tensor hidden = tanh(linear(flat, p.w1, p.b1));
  Tensor scores = reshape(linear(hidden, p.w2, p.b2), {t, v});
  Tensor k_out = softmax(scores, 1);
  Tensor f_p = reshape(scale_channels(flat, reshape(k_out, {t * v})), {t, v, c});
  return {k_out, f_p};
}

// Uniform prior mass over the joints mapped to the body part, constant over
// frames.
inline Tensor kgt_prior(const std::string& body_part, const BodyPartTable& table) {
  const auto& group = table.group(body_part);  // throws on unknown part
  Tensor prior = Tensor::zeros({table.num_joints});
  const double w = 1.0 / double(group.size());
  for (std::size_t j : group) prior.at(j) = w;
  return prior;
}

// sum_t || K_out[t, :] - K_gt ||_2
inline Tensor kpd_loss(const Tensor& k_out, const Tensor& k_gt) {
  return rows_l2_diff_sum(k_out, k_gt);
}

}  // namespace skelctx
