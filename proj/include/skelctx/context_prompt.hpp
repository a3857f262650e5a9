#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "skelctx/context_bank.hpp"
#include "skelctx/fusion.hpp"
#include "skelctx/language_model.hpp"

namespace skelctx {

// Progressive partial masking curriculum: r_t = max(r_min, min(1, t / T)).
struct PpmSchedule {
  std::size_t total_steps = 1;
  double floor_ratio = 0.0;

  PpmSchedule() = default;
  PpmSchedule(std::size_t steps, double floor) : total_steps(steps), floor_ratio(floor) {
    if (total_steps < 1) throw std::invalid_argument("ppm: total_steps must be >= 1");
    if (floor_ratio < 0.0 || floor_ratio >= 1.0)
      throw std::invalid_argument("ppm: floor ratio must lie in [0, 1)");
  }
};

inline double ppm_ratio(std::size_t t, const PpmSchedule& s) {
  const double r = std::min(1.0, double(t) / double(s.total_steps));
  return std::max(s.floor_ratio, r);
}

inline std::size_t masked_slot_count(double r, std::size_t slots) {
  if (r < 0.0 || r > 1.0) throw std::invalid_argument("masking ratio must lie in [0, 1]");
  return std::size_t(std::floor(r * double(slots) + 0.5));  // round half up
}

// Masks round(r * S) slots chosen uniformly without replacement; the remaining
// slots keep their ground-truth tokens. Re-masking an already masked prompt
// starts from the unmasked state.
inline PromptState apply_mask(PromptState prompt, double r, std::mt19937_64& rng) {
  const std::size_t s = prompt.slot_spans.size();
  for (std::size_t i = 0; i < s; ++i)
    prompt.token_ids[prompt.slot_spans[i].begin] = prompt.slot_targets[i];
  prompt.masked_positions.clear();
  prompt.target_ids.clear();

  const std::size_t m = masked_slot_count(r, s);
  std::vector<std::size_t> order(s);
  for (std::size_t i = 0; i < s; ++i) order[i] = i;
  for (std::size_t i = 0; i + 1 < s; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, s - 1);
    std::swap(order[i], order[d(rng)]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + m);
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t slot : chosen) {
    const std::size_t pos = prompt.slot_spans[slot].begin;
    prompt.masked_positions.push_back(pos);
    prompt.target_ids.push_back(prompt.slot_targets[slot]);
    prompt.token_ids[pos] = Vocabulary::kMask;
  }
  return prompt;
}

struct SlotPrediction {
  Slot slot;
  std::size_t predicted_id = 0;
  std::size_t target_id = 0;
};

// Fully masks the prompt, fuses skeleton features with the masked prompt
// encoding and decodes each slot as the argmax content token (reserved and
// prompt-keyword ids never win; ties go to the lowest id).
inline std::vector<SlotPrediction> reconstruct_context(const Tensor& f_diff,
                                                       const PromptState& prompt,
                                                       const LmParams& lm,
                                                       const FusionParams& fusion,
                                                       const Vocabulary& vocab) {
  PromptState masked = prompt;
  for (std::size_t i = 0; i < masked.slot_spans.size(); ++i) {
    masked.token_ids[masked.slot_spans[i].begin] = Vocabulary::kMask;
  }
  Tensor h_t = lm_encode(masked, lm);
  auto [f_ctx, h_ctx] = cross_modal_fuse(f_diff, h_t, fusion);
  (void)f_ctx;
  std::vector<SlotPrediction> out;
  for (std::size_t i = 0; i < masked.slot_spans.size(); ++i) {
    const std::size_t pos = masked.slot_spans[i].begin;
    Tensor logits = mlm_logits(gather_rows(h_ctx, {pos}), lm);
    std::size_t best = Vocabulary::kFirstContent;
    double best_v = -1e300;
    for (std::size_t id = Vocabulary::kFirstContent; id < vocab.size(); ++id) {
      const double v = logits.at(0, id);
      if (v > best_v) {
        best_v = v;
        best = id;
      }
    }
    out.push_back({masked.slot_spans[i].slot, best, prompt.slot_targets[i]});
  }
  return out;
}

}  // namespace skelctx
