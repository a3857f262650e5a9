#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "skelctx/vocab.hpp"

namespace skelctx {

inline std::string default_data_dir() {
  if (const char* env = std::getenv("SKELCTX_DATA_DIR")) return env;
  return "data";
}

// One structured description of an action class. The three context fields fill
// the prompt slots; body_part and subaction are metadata consumed by the
// key-part prior and the action-side semantic embedding.
struct ContextDescription {
  int class_id = 0;
  std::string environment;
  std::string used_object;
  std::string target_object;
  std::string body_part;
  std::string subaction;

  bool operator==(const ContextDescription&) const = default;
};

enum class Slot { kEnvironment = 0, kUsedObject = 1, kTargetObject = 2 };

inline const std::string& slot_field(const ContextDescription& d, Slot s) {
  switch (s) {
    case Slot::kEnvironment: return d.environment;
    case Slot::kUsedObject: return d.used_object;
    default: return d.target_object;
  }
}

inline const char* slot_name(Slot s) {
  switch (s) {
    case Slot::kEnvironment: return "environment";
    case Slot::kUsedObject: return "used_object";
    default: return "target_object";
  }
}

struct SlotSpan {
  std::size_t begin = 0;  // half-open [begin, end)
  std::size_t end = 0;
  Slot slot = Slot::kEnvironment;
};

// Tokenized prompt with slot bookkeeping. slot_targets holds the ground-truth
// content id of every slot; masked_positions/target_ids cover only the
// currently masked ones.
struct PromptState {
  std::vector<std::size_t> token_ids;
  std::vector<SlotSpan> slot_spans;
  std::vector<std::size_t> slot_targets;
  std::vector<std::size_t> masked_positions;
  std::vector<std::size_t> target_ids;
};

class ContextBank {
 public:
  ContextBank() = default;
  ContextBank(std::vector<ContextDescription> descriptions,
              std::vector<std::string> class_names, Vocabulary vocab)
      : descriptions_(std::move(descriptions)),
        class_names_(std::move(class_names)),
        vocab_(std::move(vocab)) {
    by_class_.resize(class_names_.size());
    for (std::size_t i = 0; i < descriptions_.size(); ++i)
      by_class_[descriptions_[i].class_id].push_back(i);
  }

  std::size_t num_classes() const { return class_names_.size(); }
  std::size_t size() const { return descriptions_.size(); }
  const std::vector<ContextDescription>& descriptions() const { return descriptions_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::string& class_name(std::size_t c) const { return class_names_.at(c); }

  const std::vector<std::size_t>& class_descriptions(std::size_t class_id) const {
    if (class_id >= by_class_.size())
      throw std::out_of_range("unknown class id in context bank");
    return by_class_[class_id];
  }

  const ContextDescription& description(std::size_t i) const {
    return descriptions_.at(i);
  }

 private:
  std::vector<ContextDescription> descriptions_;
  std::vector<std::string> class_names_;
  Vocabulary vocab_;
  std::vector<std::vector<std::size_t>> by_class_;
};

namespace detail {

inline void validate_token(const std::string& t, const std::string& field) {
  if (t.empty()) throw std::runtime_error("context bank: empty " + field + " token");
  for (char c : t) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    if (!ok)
      throw std::runtime_error("context bank: token '" + t + "' in " + field +
                               " must be lowercase with no whitespace");
  }
}

}  // namespace detail

inline ContextBank load_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("context bank file not found: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("context bank parse error: " + std::string(e.what()));
  }
  if (!doc.is_array()) throw std::runtime_error("context bank: top level must be an array");

  static const std::vector<std::string> required = {
      "class_id", "class_name", "environment", "used_object",
      "target_object", "body_part", "subaction"};

  std::vector<ContextDescription> descs;
  std::vector<std::string> class_names;
  std::set<std::pair<int, std::string>> dedupe;
  for (const auto& rec : doc) {
    if (!rec.is_object()) throw std::runtime_error("context bank: record is not an object");
    for (const auto& [key, _] : rec.items())
      if (std::find(required.begin(), required.end(), key) == required.end())
        throw std::runtime_error("context bank: unknown field '" + key + "'");
    for (const auto& key : required)
      if (!rec.contains(key))
        throw std::runtime_error("context bank: record missing field '" + key + "'");

    ContextDescription d;
    d.class_id = rec.at("class_id").get<int>();
    if (d.class_id < 0) throw std::runtime_error("context bank: negative class_id");
    d.environment = rec.at("environment").get<std::string>();
    d.used_object = rec.at("used_object").get<std::string>();
    d.target_object = rec.at("target_object").get<std::string>();
    d.body_part = rec.at("body_part").get<std::string>();
    d.subaction = rec.at("subaction").get<std::string>();
    detail::validate_token(d.environment, "environment");
    detail::validate_token(d.used_object, "used_object");
    detail::validate_token(d.target_object, "target_object");
    detail::validate_token(d.body_part, "body_part");
    detail::validate_token(d.subaction, "subaction");

    const std::string key = d.environment + "/" + d.used_object + "/" +
                            d.target_object + "/" + d.body_part + "/" + d.subaction;
    if (!dedupe.emplace(d.class_id, key).second)
      throw std::runtime_error("context bank: duplicate description for class " +
                               std::to_string(d.class_id));

    const auto name = rec.at("class_name").get<std::string>();
    if (std::size_t(d.class_id) >= class_names.size())
      class_names.resize(d.class_id + 1);
    if (class_names[d.class_id].empty())
      class_names[d.class_id] = name;
    else if (class_names[d.class_id] != name)
      throw std::runtime_error("context bank: conflicting names for class " +
                               std::to_string(d.class_id));
    descs.push_back(std::move(d));
  }
  if (descs.empty()) throw std::runtime_error("context bank: no descriptions");
  for (std::size_t c = 0; c < class_names.size(); ++c)
    if (class_names[c].empty())
      throw std::runtime_error("context bank: class " + std::to_string(c) +
                               " has no descriptions");

  std::set<std::string> tokens;
  for (const auto& d : descs) {
    tokens.insert(d.environment);
    tokens.insert(d.used_object);
    tokens.insert(d.target_object);
    tokens.insert(d.body_part);
    tokens.insert(d.subaction);
  }
  Vocabulary vocab;
  vocab.add_content_tokens({tokens.begin(), tokens.end()});
  return ContextBank(std::move(descs), std::move(class_names), std::move(vocab));
}

inline const ContextDescription& sample_description(const ContextBank& bank,
                                                    std::size_t class_id,
                                                    std::mt19937_64& rng) {
  const auto& idx = bank.class_descriptions(class_id);
  if (idx.empty()) throw std::out_of_range("class has no descriptions");
  std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
  return bank.description(idx[pick(rng)]);
}

// Token layout (all slots enabled):
//   environment : SLOT | used object : SLOT | target object : SLOT
// A slot subset drops whole segments; separators join the segments that remain.
inline PromptState build_prompt(const ContextDescription& desc, const Vocabulary& vocab,
                                const std::vector<Slot>& slots = {
                                    Slot::kEnvironment, Slot::kUsedObject,
                                    Slot::kTargetObject}) {
  if (slots.empty()) throw std::invalid_argument("build_prompt: no slots enabled");
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
    const std::size_t target = vocab.id(slot_field(desc, s));
    p.slot_spans.push_back({p.token_ids.size(), p.token_ids.size() + 1, s});
    p.slot_targets.push_back(target);
    p.token_ids.push_back(target);
  }
  return p;
}

inline std::string decode_prompt(const PromptState& p, const Vocabulary& vocab) {
  std::ostringstream out;
  for (std::size_t i = 0; i < p.token_ids.size(); ++i) {
    if (i) out << ' ';
    out << vocab.token(p.token_ids[i]);
  }
  return out.str();
}

}  // namespace skelctx
