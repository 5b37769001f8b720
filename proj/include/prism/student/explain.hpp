#pragma once

#include <span>
#include <string>
#include <vector>

#include "prism/corpus/catalog.hpp"
#include "prism/corpus/sequences.hpp"
#include "prism/distill/prompt.hpp"
#include "prism/student/decode.hpp"
#include "prism/student/features.hpp"

namespace prism::student {

struct Explanation {
  std::string text;
  Generation generation;
  bool known_user = false;
};

// Unknown user ids fall back to the zero row of W_u, which reduces the
// input to plain word + position embeddings.
template <typename T>
Explanation explain_titles(const Model<T>& model, const Vocabulary& vocab, const distill::PromptTemplate& tmpl,
                           std::string_view user_id, std::span<const std::string> history, std::string_view item,
                           const DecodeConfig& decode = {}) {
  auto source = encode_source(vocab, tmpl, history, item, model.config().max_source_len);
  const auto user = model.user_row(user_id);
  Explanation e;
  e.known_user = user != Model<T>::kUnknownUser;
  e.generation = generate(model, source, user, decode);
  e.text = vocab.decode(e.generation.tokens);
  return e;
}

template <typename T>
Explanation explain(const Model<T>& model, const Vocabulary& vocab, const distill::PromptTemplate& tmpl,
                    const corpus::RecommendationInstance& instance, const corpus::Catalog& catalog,
                    const DecodeConfig& decode = {}) {
  auto titles = distill::history_titles(instance.history, catalog);
  return explain_titles(model, vocab, tmpl, instance.user_id, titles, catalog.at(instance.recommended_item).title, decode);
}

}  // namespace prism::student
