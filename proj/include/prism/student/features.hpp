#pragma once

#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "prism/distill/pipeline.hpp"
#include "prism/distill/prompt.hpp"
#include "prism/student/model.hpp"
#include "prism/student/vocabulary.hpp"

namespace prism::student {

// Source ids for a prompt. When the rendered prompt is longer than
// max_len, the oldest history titles are dropped one at a time; if the
// prompt still does not fit with an empty history it is cut to max_len.
inline std::vector<int> encode_source(const Vocabulary& vocab, const distill::PromptTemplate& tmpl,
                                      std::span<const std::string> history, std::string_view item, std::size_t max_len) {
  std::size_t first = 0;
  while (true) {
    std::vector<std::string> kept(history.begin() + static_cast<std::ptrdiff_t>(first), history.end());
    auto ids = vocab.encode(tmpl.render(kept, item));
    if (ids.size() <= max_len) return ids;
    if (first == history.size()) {
      ids.resize(max_len);
      return ids;
    }
    ++first;
  }
}

// Explanation tokens cut to max_len - 1, then the end token.
inline std::vector<int> encode_target(const Vocabulary& vocab, std::string_view explanation, std::size_t max_len) {
  auto ids = vocab.encode(explanation);
  if (max_len == 0) throw InputError("max_target_len must be >= 1");
  if (ids.size() > max_len - 1) ids.resize(max_len - 1);
  ids.push_back(Vocabulary::kEnd);
  return ids;
}

// Texts the vocabulary is built from: every rendered prompt and every
// golden explanation.
inline std::vector<std::string> vocabulary_texts(std::span<const distill::DistilledSample> samples,
                                                 const distill::PromptTemplate& tmpl) {
  std::vector<std::string> texts;
  texts.reserve(samples.size() * 2);
  for (const auto& s : samples) {
    texts.push_back(tmpl.render(s.history, s.recommended_item));
    texts.push_back(s.golden_explanation);
  }
  return texts;
}

inline std::vector<std::string> distinct_users(std::span<const distill::DistilledSample> samples) {
  std::vector<std::string> users;
  std::unordered_set<std::string> seen;
  for (const auto& s : samples)
    if (seen.insert(s.user_id).second) users.push_back(s.user_id);
  return users;
}

template <typename T>
Example make_example(const Model<T>& model, const Vocabulary& vocab, const distill::PromptTemplate& tmpl,
                     const distill::DistilledSample& s) {
  const auto& c = model.config();
  return Example{encode_source(vocab, tmpl, s.history, s.recommended_item, c.max_source_len), model.user_row(s.user_id),
                 encode_target(vocab, s.golden_explanation, c.max_target_len)};
}

template <typename T>
std::vector<Example> make_examples(const Model<T>& model, const Vocabulary& vocab, const distill::PromptTemplate& tmpl,
                                   std::span<const distill::DistilledSample> samples) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(make_example(model, vocab, tmpl, s));
  return out;
}

}  // namespace prism::student
