#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "skelctx/context_bank.hpp"
#include "skelctx/rng.hpp"

namespace skelctx {

constexpr std::size_t kCoords = 3;

// T x V x 3 joint positions, row-major.
struct SkeletonSequence {
  std::size_t frames = 0;
  std::size_t joints = 0;
  int class_id = 0;
  int subject_id = 0;
  std::vector<double> data;

  double at(std::size_t t, std::size_t v, std::size_t c) const {
    return data[(t * joints + v) * kCoords + c];
  }
  double& at(std::size_t t, std::size_t v, std::size_t c) {
    return data[(t * joints + v) * kCoords + c];
  }
  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
  bool operator==(const SkeletonSequence&) const = default;
};

struct Dataset {
  std::size_t num_joints = 0;
  std::vector<std::string> class_names;
  std::vector<SkeletonSequence> sequences;
  nlohmann::json generator;  // provenance: spec + seed

  std::size_t num_classes() const { return class_names.size(); }
};

struct ClassSplit {
  std::vector<std::size_t> seen;
  std::vector<std::size_t> unseen;

  bool is_seen(std::size_t c) const {
    return std::find(seen.begin(), seen.end(), c) != seen.end();
  }
};

// Motion grounding of the description vocabulary: every context token maps to
// a measurable attribute of the generated motion, so contextual semantics stay
// recoverable from the skeleton alone.
struct ArchetypeTable {
  std::map<std::string, double> used_object_cycles;      // oscillation cycles per clip
  std::map<std::string, double> target_object_amplitude; // motion amplitude
  std::map<std::string, int> environment_posture;        // posture pattern id
  std::map<std::string, int> subaction_waveform;         // waveform tier id
};

struct BodyPartTable {
  std::size_t num_joints = 0;
  std::map<std::string, std::vector<std::size_t>> groups;

  const std::vector<std::size_t>& group(const std::string& part) const {
    auto it = groups.find(part);
    if (it == groups.end()) throw std::out_of_range("unknown body part: " + part);
    return it->second;
  }
};

inline ArchetypeTable load_archetypes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("archetype table not found: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc = nlohmann::json::parse(buf.str());
  ArchetypeTable t;
  t.used_object_cycles = doc.at("used_object_cycles").get<std::map<std::string, double>>();
  t.target_object_amplitude =
      doc.at("target_object_amplitude").get<std::map<std::string, double>>();
  t.environment_posture = doc.at("environment_posture").get<std::map<std::string, int>>();
  t.subaction_waveform = doc.at("subaction_waveform").get<std::map<std::string, int>>();
  return t;
}

inline BodyPartTable load_body_parts(const std::string& path, std::size_t num_joints) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("body part table not found: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc = nlohmann::json::parse(buf.str());
  const std::string key = std::to_string(num_joints);
  if (!doc.at("joint_counts").contains(key))
    throw std::runtime_error("body part table has no entry for " + key + " joints");
  BodyPartTable t;
  t.num_joints = num_joints;
  for (const auto& [part, ids] : doc.at("joint_counts").at(key).items()) {
    auto v = ids.get<std::vector<std::size_t>>();
    for (std::size_t j : v)
      if (j >= num_joints)
        throw std::runtime_error("body part table: joint index out of range in " + part);
    t.groups[part] = std::move(v);
  }
  return t;
}

namespace detail {

// Neutral standing pose for the 25-joint layout (spine up the y axis, arms at
// the sides, legs down); units roughly meters from the root.
inline std::vector<std::array<double, 3>> rest_pose(std::size_t v) {
  if (v == 25) {
    return {
        {0.00, 0.00, 0.00},   // 0  spine base
        {0.00, 0.30, 0.00},   // 1  spine mid
        {0.00, 0.65, 0.00},   // 2  neck
        {0.00, 0.80, 0.00},   // 3  head
        {-0.20, 0.55, 0.00},  // 4  left shoulder
        {-0.30, 0.30, 0.00},  // 5  left elbow
        {-0.35, 0.05, 0.00},  // 6  left wrist
        {-0.37, -0.03, 0.02}, // 7  left hand
        {0.20, 0.55, 0.00},   // 8  right shoulder
        {0.30, 0.30, 0.00},   // 9  right elbow
        {0.35, 0.05, 0.00},   // 10 right wrist
        {0.37, -0.03, 0.02},  // 11 right hand
        {-0.10, -0.10, 0.00}, // 12 left hip
        {-0.12, -0.50, 0.00}, // 13 left knee
        {-0.13, -0.90, 0.00}, // 14 left ankle
        {-0.13, -0.95, 0.12}, // 15 left foot
        {0.10, -0.10, 0.00},  // 16 right hip
        {0.12, -0.50, 0.00},  // 17 right knee
        {0.13, -0.90, 0.00},  // 18 right ankle
        {0.13, -0.95, 0.12},  // 19 right foot
        {0.00, 0.50, 0.00},   // 20 spine shoulder
        {-0.39, -0.10, 0.03}, // 21 left hand tip
        {-0.33, -0.05, 0.05}, // 22 left thumb
        {0.39, -0.10, 0.03},  // 23 right hand tip
        {0.33, -0.05, 0.05},  // 24 right thumb
    };
  }
  // Generic fallback: joints spread on a vertical zig-zag.
  std::vector<std::array<double, 3>> pose(v);
  for (std::size_t j = 0; j < v; ++j)
    pose[j] = {0.3 * std::sin(1.9 * double(j)), 0.8 * double(j) / double(v) - 0.4,
               0.1 * std::cos(2.7 * double(j))};
  return pose;
}

// Tiers differ in harmonic content and in mean displacement, so the style is
// visible both in motion dynamics and in the time-averaged pose.
inline double waveform(int tier, double theta) {
  switch (tier & 3) {
    case 0: return std::sin(theta);
    case 1: return 0.6 * std::sin(theta) + 0.4 * std::sin(2.0 * theta + 0.5) + 0.22;
    case 2: return 1.1 * std::abs(std::sin(theta)) - 0.25;
    default: {
      const double s = std::sin(theta);
      return 1.5 * s * s * s - 0.25;
    }
  }
}

// Per-joint motion direction, independent of class so that class identity is
// carried only by grounded attributes.
inline std::array<double, 3> motion_dir(std::size_t j) {
  const double a = std::sin(1.7 * double(j) + 0.3);
  const double b = std::cos(2.3 * double(j) + 1.1);
  const double c = std::sin(3.1 * double(j) + 2.0);
  const double n = std::sqrt(a * a + b * b + c * c);
  return {a / n, b / n, c / n};
}

inline double quantize6(double x) { return std::round(x * 1e6) / 1e6; }

}  // namespace detail

struct GeneratorSpec {
  std::size_t n_classes = 8;
  std::size_t samples_per_class = 50;
  std::size_t t_raw = 48;
  std::size_t num_joints = 25;
  std::uint64_t seed = 0;
  double noise_std = 0.03;
  double max_yaw = 0.35;       // radians, about the vertical axis
  double posture_scale = 0.22; // environment posture offset magnitude

  nlohmann::json to_json() const {
    return {{"n_classes", n_classes},     {"samples_per_class", samples_per_class},
            {"t_raw", t_raw},             {"num_joints", num_joints},
            {"seed", seed},               {"noise_std", noise_std},
            {"max_yaw", max_yaw},         {"posture_scale", posture_scale}};
  }
  static GeneratorSpec from_json(const nlohmann::json& j) {
    GeneratorSpec s;
    s.n_classes = j.at("n_classes").get<std::size_t>();
    s.samples_per_class = j.at("samples_per_class").get<std::size_t>();
    s.t_raw = j.at("t_raw").get<std::size_t>();
    s.num_joints = j.at("num_joints").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.noise_std = j.value("noise_std", 0.03);
    s.max_yaw = j.value("max_yaw", 0.35);
    s.posture_scale = j.value("posture_scale", 0.22);
    return s;
  }
};

// Motion attributes of one class, resolved from its bank descriptions.
struct ClassArchetype {
  std::vector<std::size_t> active_joints;
  double cycles = 1.0;
  double amplitude = 0.5;
  int posture = 0;
  int tier = 0;
};

inline ClassArchetype resolve_archetype(const ContextBank& bank,
                                        const ArchetypeTable& table,
                                        const BodyPartTable& parts,
                                        std::size_t class_id) {
  const auto& idx = bank.class_descriptions(class_id);
  if (idx.empty()) throw std::runtime_error("class has no bank descriptions");
  const ContextDescription& d0 = bank.description(idx[0]);
  ClassArchetype a;
  auto lookup = [](const auto& m, const std::string& key, const char* what) {
    auto it = m.find(key);
    if (it == m.end())
      throw std::runtime_error(std::string("archetype table missing ") + what + ": " +
                               key);
    return it->second;
  };
  a.cycles = lookup(table.used_object_cycles, d0.used_object, "used object");
  a.amplitude = lookup(table.target_object_amplitude, d0.target_object, "target object");
  a.posture = lookup(table.environment_posture, d0.environment, "environment");
  a.tier = lookup(table.subaction_waveform, d0.subaction, "subaction");
  a.active_joints = parts.group(d0.body_part);  // throws on unknown part
  for (std::size_t i : idx) {
    const ContextDescription& d = bank.description(i);
    if (d.environment != d0.environment || d.used_object != d0.used_object ||
        d.target_object != d0.target_object || d.body_part != d0.body_part)
      throw std::runtime_error("context slots of class " + std::to_string(class_id) +
                               " are inconsistent across descriptions");
    if (lookup(table.subaction_waveform, d.subaction, "subaction") != a.tier)
      throw std::runtime_error("subaction waveforms of class " +
                               std::to_string(class_id) + " span multiple tiers");
  }
  return a;
}

// Classes are archetypes (active joint group, oscillation frequency, amplitude,
// posture and waveform style) plus per-sample Gaussian noise and a random yaw.
// Sample i of class c draws from an rng seeded by hash(seed, c, i), so the
// result is independent of generation order.
inline Dataset generate_synthetic_dataset(const GeneratorSpec& spec,
                                          const ContextBank& bank,
                                          const ArchetypeTable& table,
                                          const BodyPartTable& parts) {
  if (spec.n_classes == 0 || spec.n_classes > bank.num_classes())
    throw std::invalid_argument("generator: n_classes exceeds the context bank");
  if (spec.num_joints < 8) throw std::invalid_argument("generator: need >= 8 joints");
  if (spec.t_raw < 1 || spec.samples_per_class < 2)
    throw std::invalid_argument("generator: bad sample counts");
  if (parts.num_joints != spec.num_joints)
    throw std::invalid_argument("generator: body part table joint count mismatch");

  std::vector<ClassArchetype> archetypes;
  for (std::size_t c = 0; c < spec.n_classes; ++c)
    archetypes.push_back(resolve_archetype(bank, table, parts, c));

  const auto rest = detail::rest_pose(spec.num_joints);
  const double pi = 3.14159265358979323846;

  Dataset ds;
  ds.num_joints = spec.num_joints;
  ds.generator = spec.to_json();
  for (std::size_t c = 0; c < spec.n_classes; ++c) ds.class_names.push_back(bank.class_name(c));

  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const ClassArchetype& a = archetypes[c];
    std::vector<bool> active(spec.num_joints, false);
    for (std::size_t j : a.active_joints) active[j] = true;
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      auto rng = make_rng(spec.seed, "sample", mix_seed(c, s));
      std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * pi);
      std::uniform_real_distribution<double> yaw_dist(-spec.max_yaw, spec.max_yaw);
      std::normal_distribution<double> noise(0.0, spec.noise_std);
      const double phase = phase_dist(rng);
      const double yaw = yaw_dist(rng);
      const double cy = std::cos(yaw), sy = std::sin(yaw);

      SkeletonSequence seq;
      seq.frames = spec.t_raw;
      seq.joints = spec.num_joints;
      seq.class_id = int(c);
      seq.subject_id = int(s % 10);
      seq.data.resize(spec.t_raw * spec.num_joints * kCoords);
      for (std::size_t t = 0; t < spec.t_raw; ++t) {
        const double tau = spec.t_raw > 1 ? double(t) / double(spec.t_raw - 1) : 0.0;
        for (std::size_t j = 0; j < spec.num_joints; ++j) {
          double x = rest[j][0];
          double y = rest[j][1];
          double z = rest[j][2];
          // Environment posture: a static vertical offset wave over joints,
          // phase-shifted per posture id (robust to yaw).
          y += spec.posture_scale *
               std::cos(2.0 * pi * double(j) / double(spec.num_joints) +
                        double(a.posture) * pi / 2.0);
          if (active[j]) {
            const double theta = 2.0 * pi * a.cycles * tau + phase +
                                 0.4 * double(a.tier) * double(j % 4);
            const double w = detail::waveform(a.tier, theta);
            const auto dir = detail::motion_dir(j);
            x += a.amplitude * w * dir[0];
            y += a.amplitude * w * dir[1];
            z += a.amplitude * w * dir[2];
          }
          x += noise(rng);
          y += noise(rng);
          z += noise(rng);
          // Yaw about the vertical axis through the root.
          const double xr = cy * x + sy * z;
          const double zr = -sy * x + cy * z;
          seq.at(t, j, 0) = detail::quantize6(xr);
          seq.at(t, j, 1) = detail::quantize6(y);
          seq.at(t, j, 2) = detail::quantize6(zr);
        }
      }
      ds.sequences.push_back(std::move(seq));
    }
  }
  return ds;
}

// Uniform temporal resampling to target_frames by linear interpolation on the
// frame index, then per-frame root centering (joint 0 maps to the origin).
inline SkeletonSequence preprocess_sequence(const SkeletonSequence& seq,
                                            std::size_t target_frames = 64) {
  if (seq.frames < 1) throw std::invalid_argument("preprocess: empty sequence");
  SkeletonSequence out;
  out.frames = target_frames;
  out.joints = seq.joints;
  out.class_id = seq.class_id;
  out.subject_id = seq.subject_id;
  out.data.resize(target_frames * seq.joints * kCoords);
  for (std::size_t t = 0; t < target_frames; ++t) {
    double pos = 0.0;
    if (target_frames > 1 && seq.frames > 1)
      pos = double(t) * double(seq.frames - 1) / double(target_frames - 1);
    const std::size_t k = std::min(std::size_t(pos), seq.frames - 1);
    const std::size_t k1 = std::min(k + 1, seq.frames - 1);
    const double f = pos - double(k);
    for (std::size_t j = 0; j < seq.joints; ++j)
      for (std::size_t c = 0; c < kCoords; ++c) {
        const double a = seq.at(k, j, c);
        const double b = seq.at(k1, j, c);
        out.at(t, j, c) = f == 0.0 ? a : (1.0 - f) * a + f * b;
      }
    const double rx = out.at(t, 0, 0), ry = out.at(t, 0, 1), rz = out.at(t, 0, 2);
    for (std::size_t j = 0; j < seq.joints; ++j) {
      out.at(t, j, 0) -= rx;
      out.at(t, j, 1) -= ry;
      out.at(t, j, 2) -= rz;
    }
  }
  return out;
}

inline ClassSplit make_split(std::size_t n_classes, std::size_t n_unseen,
                             std::uint64_t seed) {
  if (n_unseen == 0 || n_unseen >= n_classes)
    throw std::invalid_argument("make_split: need 0 < n_unseen < n_classes");
  std::vector<std::size_t> ids(n_classes);
  std::iota(ids.begin(), ids.end(), 0);
  auto rng = make_rng(seed, "class-split");
  for (std::size_t i = n_classes - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> d(0, i);
    std::swap(ids[i], ids[d(rng)]);
  }
  ClassSplit split;
  split.unseen.assign(ids.begin(), ids.begin() + n_unseen);
  split.seen.assign(ids.begin() + n_unseen, ids.end());
  std::sort(split.unseen.begin(), split.unseen.end());
  std::sort(split.seen.begin(), split.seen.end());
  return split;
}

inline void validate_dataset(const Dataset& ds) {
  if (ds.sequences.empty()) throw std::runtime_error("dataset: empty sequence list");
  std::vector<std::size_t> counts(ds.class_names.size(), 0);
  for (const auto& s : ds.sequences) {
    if (s.class_id < 0 || std::size_t(s.class_id) >= ds.class_names.size())
      throw std::runtime_error("dataset: class_id out of range");
    if (s.joints != ds.num_joints) throw std::runtime_error("dataset: joint count mismatch");
    if (s.frames < 1 || s.data.size() != s.frames * s.joints * kCoords)
      throw std::runtime_error("dataset: malformed sequence buffer");
    if (!s.all_finite()) throw std::runtime_error("dataset: non-finite coordinates");
    ++counts[s.class_id];
  }
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] < 2)
      throw std::runtime_error("dataset: class " + std::to_string(c) +
                               " has fewer than 2 samples");
}

inline nlohmann::json dataset_to_json(const Dataset& ds) {
  validate_dataset(ds);
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : ds.sequences) {
    nlohmann::json frames = nlohmann::json::array();
    for (std::size_t t = 0; t < s.frames; ++t) {
      nlohmann::json joints = nlohmann::json::array();
      for (std::size_t j = 0; j < s.joints; ++j)
        joints.push_back({s.at(t, j, 0), s.at(t, j, 1), s.at(t, j, 2)});
      frames.push_back(std::move(joints));
    }
    seqs.push_back({{"class_id", s.class_id},
                    {"subject_id", s.subject_id},
                    {"joints", std::move(frames)}});
  }
  return {{"version", 1},
          {"num_joints", ds.num_joints},
          {"classes", ds.class_names},
          {"generator", ds.generator},
          {"sequences", std::move(seqs)}};
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open dataset file for writing: " + path);
  out << dataset_to_json(ds).dump() << '\n';
}

inline Dataset dataset_from_json(const nlohmann::json& doc) {
  if (!doc.contains("version") || doc.at("version").get<int>() != 1)
    throw std::runtime_error("dataset: unsupported version");
  Dataset ds;
  ds.num_joints = doc.at("num_joints").get<std::size_t>();
  ds.class_names = doc.at("classes").get<std::vector<std::string>>();
  ds.generator = doc.value("generator", nlohmann::json::object());
  for (const auto& rec : doc.at("sequences")) {
    SkeletonSequence s;
    s.class_id = rec.at("class_id").get<int>();
    s.subject_id = rec.at("subject_id").get<int>();
    const auto& frames = rec.at("joints");
    s.frames = frames.size();
    s.joints = ds.num_joints;
    s.data.reserve(s.frames * s.joints * kCoords);
    for (const auto& frame : frames) {
      if (frame.size() != ds.num_joints)
        throw std::runtime_error("dataset: frame joint count mismatch");
      for (const auto& xyz : frame) {
        if (xyz.size() != kCoords) throw std::runtime_error("dataset: joint is not 3-D");
        for (const auto& v : xyz) s.data.push_back(v.get<double>());
      }
    }
    ds.sequences.push_back(std::move(s));
  }
  validate_dataset(ds);
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset file not found: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("dataset parse error: " + std::string(e.what()));
  }
  return dataset_from_json(doc);
}

}  // namespace skelctx
