#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "prism/common.hpp"
#include "prism/text.hpp"

namespace prism::student {

// Token <-> id bijection with four reserved ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBegin = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnknown = 3;
  static constexpr std::size_t kNumSpecial = 4;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  // `tokens` excludes the specials; ids start at kNumSpecial.
  explicit Vocabulary(const std::vector<std::string>& tokens) {
    tokens_ = {"<pad>", "<s>", "</s>", "<unk>"};
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
    for (const auto& t : tokens) {
      if (t.empty()) throw InputError("vocabulary token must be non-empty");
      if (!index_.emplace(t, static_cast<int>(tokens_.size())).second) throw InputError("duplicate vocabulary token '" + t + "'");
      tokens_.push_back(t);
    }
  }

  // All tokens in id order, specials included.
  static Vocabulary from_full_list(const std::vector<std::string>& all) {
    static const std::vector<std::string> specials = {"<pad>", "<s>", "</s>", "<unk>"};
    if (all.size() < kNumSpecial || !std::equal(specials.begin(), specials.end(), all.begin()))
      throw InputError("vocabulary must start with the reserved tokens <pad> <s> </s> <unk>");
    return Vocabulary(std::vector<std::string>(all.begin() + kNumSpecial, all.end()));
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnknown : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw InputError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& t : text::tokenize(text)) ids.push_back(id(t));
    return ids;
  }

  // Drops specials and stops at the end token.
  std::string decode(std::span<const int> ids) const {
    std::vector<std::string> words;
    for (int i : ids) {
      if (i == kEnd) break;
      if (i == kPad || i == kBegin) continue;
      words.push_back(token(i));
    }
    return text::detokenize(words);
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Every token seen at least `min_frequency` times, most frequent first,
// ties broken lexicographically.
inline Vocabulary build_vocabulary(std::span<const std::string> texts, std::size_t min_frequency) {
  if (texts.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& tok : text::tokenize(t)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts)
    if (n >= std::max<std::size_t>(min_frequency, 1)) ranked.emplace_back(tok, n);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary(tokens);
}

}  // namespace prism::student
