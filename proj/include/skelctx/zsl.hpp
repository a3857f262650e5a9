#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace skelctx {

// Cosine similarities of one sample against each candidate class, one stream.
struct ScoreVector {
  std::vector<double> scores;  // aligned with the candidate class list
  std::string stream;          // "context" | "part"
};

inline double harmonic_mean(double seen, double unseen) {
  if (seen < 0 || unseen < 0) throw std::invalid_argument("harmonic_mean: negative input");
  const double s = seen + unseen;
  return s == 0.0 ? 0.0 : 2.0 * seen * unseen / s;
}

// Calibrated stacking: subtract gamma_s / gamma_t from the seen-class entries
// of the two streams, sum, argmax with lowest-class-id tie break (candidates
// are listed in ascending class-id order, so the first maximum wins).
inline std::size_t calibrated_predict(const std::vector<double>& ctx,
                                      const std::vector<double>& part,
                                      const std::vector<bool>& seen_mask, double gamma_s,
                                      double gamma_t) {
  if (ctx.empty() || ctx.size() != part.size() || ctx.size() != seen_mask.size())
    throw std::invalid_argument("calibrated_predict: empty or mismatched candidates");
  std::size_t best = 0;
  double best_v = -1e300;
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    double v = ctx[i] + part[i];
    if (seen_mask[i]) v -= gamma_s + gamma_t;
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

struct EvalReport {
  std::string mode;  // "zsl" | "gzsl"
  double seen_acc = 0.0;    // percent
  double unseen_acc = 0.0;  // percent
  double harmonic = 0.0;    // percent
  double zsl_acc = 0.0;     // percent (zsl mode)
  double gamma_s = 0.0;
  double gamma_t = 0.0;
  std::vector<std::size_t> candidates;              // class ids, ascending
  std::vector<double> per_class_acc;                // percent, aligned with candidates
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

  nlohmann::json to_json() const {
    return {{"mode", mode},
            {"seen_acc", seen_acc},
            {"unseen_acc", unseen_acc},
            {"harmonic_mean", harmonic},
            {"zsl_acc", zsl_acc},
            {"gamma_s", gamma_s},
            {"gamma_t", gamma_t},
            {"candidates", candidates},
            {"per_class_acc", per_class_acc},
            {"confusion", confusion}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.mode = j.at("mode").get<std::string>();
    r.seen_acc = j.at("seen_acc").get<double>();
    r.unseen_acc = j.at("unseen_acc").get<double>();
    r.harmonic = j.at("harmonic_mean").get<double>();
    r.zsl_acc = j.at("zsl_acc").get<double>();
    r.gamma_s = j.at("gamma_s").get<double>();
    r.gamma_t = j.at("gamma_t").get<double>();
    r.candidates = j.at("candidates").get<std::vector<std::size_t>>();
    r.per_class_acc = j.at("per_class_acc").get<std::vector<double>>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    return r;
  }
};

// Scored sample ready for calibration sweeps.
struct ScoredSample {
  std::vector<double> ctx;
  std::vector<double> part;
  std::size_t true_index = 0;  // into the candidate list
};

// Grid search for the stacking penalty on a held-out seen-class validation
// set. The proxy balances calibrated seen accuracy against how readily a
// sample routes to the unseen group once its own class is removed from the
// candidates (a stand-in for unseen recall that never touches unseen data).
// Both factors are returned by the harmonic mean; gamma_s = gamma_t follows
// the shared-setting convention.
inline std::pair<double, double> calibrate_gamma(const std::vector<ScoredSample>& val,
                                                 const std::vector<bool>& seen_mask,
                                                 const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("calibrate_gamma: empty grid");
  if (val.empty()) return {grid.front(), grid.front()};
  double best_gamma = grid.front();
  double best_proxy = -1.0;
  for (double gamma : grid) {
    std::size_t correct = 0, routed_unseen = 0;
    for (const auto& s : val) {
      const std::size_t pred = calibrated_predict(s.ctx, s.part, seen_mask, gamma, gamma);
      if (pred == s.true_index) ++correct;
      // Re-predict with the true class knocked out.
      std::vector<double> ctx = s.ctx;
      std::vector<double> part = s.part;
      ctx[s.true_index] = -1e30;
      part[s.true_index] = -1e30;
      const std::size_t alt = calibrated_predict(ctx, part, seen_mask, gamma, gamma);
      if (!seen_mask[alt]) ++routed_unseen;
    }
    const double acc = double(correct) / double(val.size());
    const double route = double(routed_unseen) / double(val.size());
    const double proxy = harmonic_mean(acc, route);
    if (proxy > best_proxy) {
      best_proxy = proxy;
      best_gamma = gamma;
    }
  }
  return {best_gamma, best_gamma};
}

struct DifficultyCluster {
  std::size_t anchor = 0;                // class id
  std::vector<std::size_t> confused;     // top-3 class ids
  std::string tier;                      // "hard" | "medium" | "easy"
};

// Per anchor: the three classes with the largest off-diagonal confusion counts
// (ties to the lower class id). Anchors are ranked by their accuracy and split
// into three tiers of near-equal size; the lowest-accuracy third is hard.
inline std::vector<DifficultyCluster> difficulty_clusters(
    const std::vector<std::vector<std::size_t>>& confusion,
    const std::vector<double>& anchor_acc, const std::vector<std::size_t>& classes) {
  const std::size_t n = classes.size();
  if (n < 4) throw std::invalid_argument("difficulty_clusters: need at least 4 classes");
  if (confusion.size() != n || anchor_acc.size() != n)
    throw std::invalid_argument("difficulty_clusters: shape mismatch");

  std::vector<DifficultyCluster> clusters(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < n; ++j)
      if (j != a) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (confusion[a][x] != confusion[a][y]) return confusion[a][x] > confusion[a][y];
      return classes[x] < classes[y];
    });
    clusters[a].anchor = classes[a];
    for (std::size_t k = 0; k < std::min<std::size_t>(3, order.size()); ++k)
      clusters[a].confused.push_back(classes[order[k]]);
  }

  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[i] = i;
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t x, std::size_t y) {
    if (anchor_acc[x] != anchor_acc[y]) return anchor_acc[x] < anchor_acc[y];
    return classes[x] < classes[y];
  });
  const std::size_t base = n / 3, rem = n % 3;
  const std::size_t hard_n = base + (rem > 0 ? 1 : 0);
  const std::size_t medium_n = base + (rem > 1 ? 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    const char* tier = i < hard_n ? "hard" : (i < hard_n + medium_n ? "medium" : "easy");
    clusters[rank[i]].tier = tier;
  }
  return clusters;
}

}  // namespace skelctx
