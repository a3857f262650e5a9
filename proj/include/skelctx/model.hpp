#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "skelctx/alignment.hpp"
#include "skelctx/context_prompt.hpp"
#include "skelctx/encoder.hpp"
#include "skelctx/fusion.hpp"
#include "skelctx/key_part.hpp"
#include "skelctx/language_model.hpp"
#include "skelctx/zsl.hpp"

namespace skelctx {

struct ModelToggles {
  bool dje = true;
  bool scg = true;
  bool ppm = true;
  bool kpd = true;
};

inline std::vector<Slot> slots_from_flags(bool en, bool uo, bool to) {
  std::vector<Slot> s;
  if (en) s.push_back(Slot::kEnvironment);
  if (uo) s.push_back(Slot::kUsedObject);
  if (to) s.push_back(Slot::kTargetObject);
  if (s.empty()) throw std::invalid_argument("at least one prompt slot must be enabled");
  return s;
}

struct ModelConfig {
  std::size_t num_joints = 25;
  std::size_t c_feat = 64;
  std::size_t kernel = 3;
  std::size_t d_sem = 64;
  std::size_t lm_d = 64;
  std::size_t lm_layers = 2;
  std::size_t lm_heads = 4;
  std::size_t lm_ff = 256;
  std::size_t lm_max_len = 16;
  std::size_t fusion_heads = 4;
  std::size_t fusion_ff = 128;
  ModelToggles toggles;
  std::vector<Slot> slots = {Slot::kEnvironment, Slot::kUsedObject, Slot::kTargetObject};

  nlohmann::json to_json() const {
    nlohmann::json slot_names = nlohmann::json::array();
    for (Slot s : slots) slot_names.push_back(slot_name(s));
    return {{"num_joints", num_joints}, {"c_feat", c_feat},
            {"kernel", kernel},         {"d_sem", d_sem},
            {"lm_d", lm_d},             {"lm_layers", lm_layers},
            {"lm_heads", lm_heads},     {"lm_ff", lm_ff},
            {"lm_max_len", lm_max_len}, {"fusion_heads", fusion_heads},
            {"fusion_ff", fusion_ff},
            {"toggles",
             {{"dje", toggles.dje},
              {"scg", toggles.scg},
              {"ppm", toggles.ppm},
              {"kpd", toggles.kpd}}},
            {"slots", slot_names}};
  }
};

// All trainable state of the pipeline behind one parameter store. Toggled-off
// modules are simply not created, so checkpoints carry exactly the live
// parameters.
struct SkeletonContextModel {
  ModelConfig cfg;
  std::size_t vocab_size = 0;
  ParameterStore store;
  EncoderParams encoder;
  DjeParams dje;
  LmParams lm;
  FusionParams fusion;
  KpdParams kpd;
  AlignParams align;
  std::vector<std::shared_ptr<Parameter>> lm_parameters;

  static SkeletonContextModel create(const ModelConfig& cfg, const Vocabulary& vocab,
                                     const AdjacencyTable& adjacency,
                                     std::uint64_t init_seed) {
    SkeletonContextModel m;
    m.cfg = cfg;
    m.vocab_size = vocab.size();
    auto rng = make_rng(init_seed, "model-init");

    EncoderConfig enc_cfg;
    enc_cfg.num_joints = cfg.num_joints;
    enc_cfg.c_feat = cfg.c_feat;
    enc_cfg.kernel = cfg.kernel;
    m.encoder = EncoderParams::create(enc_cfg, adjacency, m.store, rng);
    if (cfg.toggles.dje) m.dje = DjeParams::create(cfg.c_feat, m.store, rng);
    if (cfg.toggles.scg) {
      LmConfig lm_cfg;
      lm_cfg.vocab_size = vocab.size();
      lm_cfg.d = cfg.lm_d;
      lm_cfg.layers = cfg.lm_layers;
      lm_cfg.heads = cfg.lm_heads;
      lm_cfg.ff_hidden = cfg.lm_ff;
      lm_cfg.max_len = cfg.lm_max_len;
      const std::size_t before = m.store.params().size();
      m.lm = LmParams::create(lm_cfg, m.store, rng);
      m.lm_parameters.assign(m.store.params().begin() + before, m.store.params().end());

      FusionConfig f_cfg;
      f_cfg.c_feat = cfg.c_feat;
      f_cfg.d = cfg.lm_d;
      f_cfg.heads = cfg.fusion_heads;
      f_cfg.ff_hidden = cfg.fusion_ff;
      m.fusion = FusionParams::create(f_cfg, m.store, rng);
    }
    if (cfg.toggles.kpd) m.kpd = KpdParams::create(cfg.c_feat, m.store, rng);
    m.align = AlignParams::create(vocab.size(), cfg.c_feat, cfg.d_sem, m.store, rng);
    return m;
  }
};

// Class-independent prompt with every slot masked; what inference feeds the
// text side.
inline PromptState masked_template_prompt(const std::vector<Slot>& slots) {
  PromptState p;
  bool first = true;
  for (Slot s : slots) {
    if (!first) p.token_ids.push_back(Vocabulary::kPipe);
    first = false;
    switch (s) {
      case Slot::kEnvironment:
        p.token_ids.push_back(Vocabulary::kEnvironment);
        break;
      case Slot::kUsedObject:
        p.token_ids.push_back(Vocabulary::kUsed);
        p.token_ids.push_back(Vocabulary::kObject);
        break;
      case Slot::kTargetObject:
        p.token_ids.push_back(Vocabulary::kTarget);
        p.token_ids.push_back(Vocabulary::kObject);
        break;
    }
    p.token_ids.push_back(Vocabulary::kColon);
    p.slot_spans.push_back({p.token_ids.size(), p.token_ids.size() + 1, s});
    p.slot_targets.push_back(Vocabulary::kMask);
    p.masked_positions.push_back(p.token_ids.size());
    p.target_ids.push_back(Vocabulary::kMask);
    p.token_ids.push_back(Vocabulary::kMask);
  }
  return p;
}

struct SampleForward {
  Tensor f_x;      // T' x V x C
  Tensor f_topo;   // V x C
  Tensor f_diff;   // V x C
  Tensor f_ctx;    // V x C
  Tensor h_ctx;    // L x d, defined only on the SCG path
  Tensor k_out;    // T' x V
  Tensor f_p;      // T' x V x C
  Tensor pooled_ctx;
  Tensor pooled_p;
};

// Forward through every module, honoring the toggles: disabled DJE passes the
// pooled topology through, disabled SCG skips fusion, disabled KPD uses a
// uniform importance map.
inline SampleForward forward_sample(const SkeletonContextModel& m, const Tensor& input,
                                    const PromptState* prompt) {
  SampleForward r;
  r.f_x = encode(input, m.encoder);
  r.f_topo = pool_topology(r.f_x);
  r.f_diff = m.cfg.toggles.dje ? dje_forward(r.f_topo, m.dje) : r.f_topo;
  if (m.cfg.toggles.scg && prompt != nullptr) {
    Tensor h_t = lm_encode(*prompt, m.lm);
    auto [f_ctx, h_ctx] = cross_modal_fuse(r.f_diff, h_t, m.fusion);
    r.f_ctx = f_ctx;
    r.h_ctx = h_ctx;
  } else {
    r.f_ctx = r.f_diff;
  }
  const std::size_t tp = r.f_x.dim(0), v = r.f_x.dim(1), c = r.f_x.dim(2);
  if (m.cfg.toggles.kpd) {
    auto [k_out, f_p] = kpd_forward(r.f_x, m.kpd);
    r.k_out = k_out;
    r.f_p = f_p;
  } else {
    r.k_out = Tensor::filled({tp, v}, 1.0 / double(v));
    Tensor flat = reshape(r.f_x, {tp * v, c});
    r.f_p = reshape(scale_channels(flat, Tensor::filled({tp * v}, 1.0 / double(v))),
                    {tp, v, c});
  }
  r.pooled_ctx = pool_features(r.f_ctx);
  r.pooled_p = pool_features(r.f_p);
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: one JSON document with a header (config, parameter table, step)
// and a flat array of all parameter values in registration order.
// ---------------------------------------------------------------------------

inline nlohmann::json checkpoint_to_json(const SkeletonContextModel& m,
                                         const nlohmann::json& run_config,
                                         std::size_t step) {
  nlohmann::json params = nlohmann::json::array();
  nlohmann::json data = nlohmann::json::array();
  for (const auto& p : m.store.params()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    for (double v : p->value.data()) data.push_back(v);
  }
  return {{"version", 1},
          {"kind", "skelctx-checkpoint"},
          {"model", m.cfg.to_json()},
          {"run_config", run_config},
          {"step", step},
          {"params", std::move(params)},
          {"data", std::move(data)}};
}

inline void save_checkpoint(const SkeletonContextModel& m, const nlohmann::json& run_config,
                            std::size_t step, const std::string& path) {
  for (const auto& p : m.store.params())
    p->value.throw_if_not_finite("checkpoint parameter " + p->name);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << checkpoint_to_json(m, run_config, step).dump() << '\n';
}

inline nlohmann::json load_checkpoint_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint not found: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint parse error: " + std::string(e.what()));
  }
  if (doc.value("version", 0) != 1 || doc.value("kind", "") != "skelctx-checkpoint")
    throw std::runtime_error("checkpoint: unsupported format");
  return doc;
}

// Restores parameter values into a freshly created model; the parameter table
// (names, shapes, order) must match the model exactly.
inline std::size_t load_checkpoint_into(SkeletonContextModel& m, const std::string& path) {
  nlohmann::json doc = load_checkpoint_header(path);
  const auto& params = doc.at("params");
  const auto& data = doc.at("data");
  if (params.size() != m.store.params().size())
    throw std::runtime_error("checkpoint/config mismatch: parameter count");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = m.store.params()[i];
    if (params[i].at("name").get<std::string>() != p->name)
      throw std::runtime_error("checkpoint/config mismatch at parameter " + p->name);
    const auto shape = params[i].at("shape").get<std::vector<std::size_t>>();
    if (shape != p->value.shape())
      throw std::runtime_error("checkpoint/config mismatch: shape of " + p->name);
    for (double& v : p->value.data()) {
      if (offset >= data.size()) throw std::runtime_error("checkpoint: truncated data");
      v = data[offset++].get<double>();
    }
  }
  if (offset != data.size()) throw std::runtime_error("checkpoint: trailing data");
  return doc.at("step").get<std::size_t>();
}

}  // namespace skelctx
