#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace skelctx {

// Closed token vocabulary. Ids 0..8 are reserved and fixed:
//   0 [PAD]   1 [MASK]   2 [SEP]
//   3 "environment"  4 ":"  5 "|"  6 "used"  7 "object"  8 "target"
// Content tokens follow, assigned in sorted order so the mapping never depends
// on file record order.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kMask = 1;
  static constexpr std::size_t kSep = 2;
  static constexpr std::size_t kEnvironment = 3;
  static constexpr std::size_t kColon = 4;
  static constexpr std::size_t kPipe = 5;
  static constexpr std::size_t kUsed = 6;
  static constexpr std::size_t kObject = 7;
  static constexpr std::size_t kTarget = 8;
  static constexpr std::size_t kFirstContent = 9;

  Vocabulary() {
    for (const char* t :
         {"[PAD]", "[MASK]", "[SEP]", "environment", ":", "|", "used", "object",
          "target"})
      push(t);
  }

  // Tokens must arrive sorted and unique; reserved names may not reappear.
  void add_content_tokens(const std::vector<std::string>& sorted_unique) {
    for (const auto& t : sorted_unique) {
      if (ids_.count(t))
        throw std::invalid_argument("vocabulary token collides with reserved: " + t);
      push(t);
    }
  }

  std::size_t id(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) throw std::out_of_range("token not in vocabulary: " + token);
    return it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw std::out_of_range("vocabulary id out of range");
    return tokens_[id];
  }

  std::size_t size() const { return tokens_.size(); }
  bool is_content(std::size_t id) const { return id >= kFirstContent && id < size(); }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void push(std::string t) {
    ids_.emplace(t, tokens_.size());
    tokens_.push_back(std::move(t));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace skelctx
