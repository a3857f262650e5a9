#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "skelctx/ops.hpp"
#include "skelctx/optimizer.hpp"
#include "skelctx/skeleton_data.hpp"
#include "skelctx/tensor.hpp"

namespace skelctx {

struct AdjacencyTable {
  std::size_t num_joints = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

inline AdjacencyTable load_adjacency(const std::string& path, std::size_t num_joints) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("adjacency file not found: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc = nlohmann::json::parse(buf.str());
  const std::string key = std::to_string(num_joints);
  if (!doc.at("joint_counts").contains(key))
    throw std::runtime_error("adjacency table has no entry for " + key + " joints");
  AdjacencyTable t;
  t.num_joints = num_joints;
  for (const auto& e : doc.at("joint_counts").at(key).at("edges")) {
    const std::size_t a = e.at(0).get<std::size_t>();
    const std::size_t b = e.at(1).get<std::size_t>();
    if (a >= num_joints || b >= num_joints)
      throw std::runtime_error("adjacency edge out of range");
    t.edges.emplace_back(a, b);
  }
  return t;
}

// Symmetric GCN normalization of A + I.
inline std::vector<double> normalized_adjacency(const AdjacencyTable& t) {
  const std::size_t v = t.num_joints;
  std::vector<double> a(v * v, 0.0);
  for (std::size_t i = 0; i < v; ++i) a[i * v + i] = 1.0;
  for (const auto& [x, y] : t.edges) {
    a[x * v + y] = 1.0;
    a[y * v + x] = 1.0;
  }
  std::vector<double> deg(v, 0.0);
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j) deg[i] += a[i * v + j];
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j)
      a[i * v + j] /= std::sqrt(deg[i]) * std::sqrt(deg[j]);
  return a;
}

struct EncoderConfig {
  std::size_t num_joints = 25;
  std::size_t c_feat = 64;
  std::size_t kernel = 3;
  std::size_t in_frames = 64;  // contract: preprocessed sequences
};

// Baseline spatio-temporal encoder: two blocks of per-joint linear lift,
// neighborhood aggregation over the skeleton graph, strided temporal
// convolution and tanh. 64 frames in, 16 out.
struct EncoderParams {
  EncoderConfig cfg;
  std::vector<double> adjacency;  // normalized, dense V x V
  Tensor lift1_w, lift1_b, conv1_w, conv1_b;
  Tensor lift2_w, lift2_b, conv2_w, conv2_b;

  static EncoderParams create(const EncoderConfig& cfg, const AdjacencyTable& adj,
                              ParameterStore& store, std::mt19937_64& rng) {
    if (adj.num_joints != cfg.num_joints)
      throw std::invalid_argument("encoder: adjacency joint count mismatch");
    EncoderParams p;
    p.cfg = cfg;
    p.adjacency = normalized_adjacency(adj);
    const std::size_t c = cfg.c_feat, k = cfg.kernel;
    auto w_init = [&](std::vector<std::size_t> shape, std::size_t fan_in) {
      return Tensor::randn(std::move(shape), 1.0 / std::sqrt(double(fan_in)), rng);
    };
    p.lift1_w = store.add("encoder.lift1.w", w_init({c, kCoords}, kCoords));
    p.lift1_b = store.add("encoder.lift1.b", Tensor::zeros({c}));
    p.conv1_w = store.add("encoder.conv1.w", w_init({c, k, c}, k * c));
    p.conv1_b = store.add("encoder.conv1.b", Tensor::zeros({c}));
    p.lift2_w = store.add("encoder.lift2.w", w_init({c, c}, c));
    p.lift2_b = store.add("encoder.lift2.b", Tensor::zeros({c}));
    p.conv2_w = store.add("encoder.conv2.w", w_init({c, k, c}, k * c));
    p.conv2_b = store.add("encoder.conv2.b", Tensor::zeros({c}));
    return p;
  }
};

inline Tensor sequence_tensor(const SkeletonSequence& seq) {
  return Tensor::from_values({seq.frames, seq.joints, kCoords}, seq.data);
}

inline Tensor encode(const Tensor& x, const EncoderParams& p) {
  if (x.rank() != 3 || x.dim(2) != kCoords)
    throw std::invalid_argument("encode: input must be T x V x 3");
  if (x.dim(1) != p.cfg.num_joints)
    throw std::invalid_argument("encode: joint count mismatch with adjacency table");
  if (x.dim(0) != p.cfg.in_frames)
    throw std::invalid_argument("encode: sequence must be preprocessed to 64 frames");
  const std::size_t v = p.cfg.num_joints;
  Tensor h = linear(x, p.lift1_w, p.lift1_b);
  h = adjacency_mix(h, p.adjacency, v);
  h = tanh(temporal_conv(h, p.conv1_w, p.conv1_b, 2));
  h = linear(h, p.lift2_w, p.lift2_b);
  h = adjacency_mix(h, p.adjacency, v);
  h = tanh(temporal_conv(h, p.conv2_w, p.conv2_b, 2));
  return h;  // T' x V x C
}

// Mean over the temporal axis: T' x V x C -> V x C.
inline Tensor pool_topology(const Tensor& f_x) {
  if (f_x.rank() != 3) throw std::invalid_argument("pool_topology: expects T x V x C");
  const std::size_t t = f_x.dim(0), v = f_x.dim(1), c = f_x.dim(2);
  Tensor flat = reshape(f_x, {t, v * c});
  return reshape(mean_rows(flat), {v, c});
}

// Differential joint attention over pooled topology features.
struct DjeParams {
  Tensor wq, wk, wv;
  Tensor ln_gamma, ln_beta;
  bool tanh_activation = true;

  static DjeParams create(std::size_t c_feat, ParameterStore& store,
                          std::mt19937_64& rng) {
    DjeParams p;
    const double s = 1.0 / std::sqrt(double(c_feat));
    p.wq = store.add("dje.wq", Tensor::randn({c_feat, c_feat}, s, rng));
    p.wk = store.add("dje.wk", Tensor::randn({c_feat, c_feat}, s, rng));
    p.wv = store.add("dje.wv", Tensor::randn({c_feat, c_feat}, s, rng));
    p.ln_gamma = store.add("dje.ln.gamma", Tensor::filled({c_feat}, 1.0));
    p.ln_beta = store.add("dje.ln.beta", Tensor::zeros({c_feat}));
    return p;
  }
};

// A_diff[i,j,c] = act(H_Q[i,c] - H_K[j,c]) with H = LN(f') W^T.
inline Tensor dje_attention(const Tensor& f_topo, const DjeParams& p) {
  Tensor ln = layer_norm(f_topo, p.ln_gamma, p.ln_beta);
  Tensor hq = matmul_nt(ln, p.wq);
  Tensor hk = matmul_nt(ln, p.wk);
  Tensor diff = pairwise_diff(hq, hk);
  return p.tanh_activation ? tanh(diff) : diff;
}

// f_diff[i,c] = (1/N) sum_j A_diff[i,j,c] * (LN(f') W_V^T)[j,c] + f_topo[i,c]
inline Tensor dje_forward(const Tensor& f_topo, const DjeParams& p) {
  if (f_topo.rank() != 2) throw std::invalid_argument("dje_forward: expects N x C");
  Tensor ln = layer_norm(f_topo, p.ln_gamma, p.ln_beta);
  Tensor values = matmul_nt(ln, p.wv);
  Tensor attn = dje_attention(f_topo, p);
  return add(pairwise_contract(attn, values), f_topo);
}

}  // namespace skelctx
