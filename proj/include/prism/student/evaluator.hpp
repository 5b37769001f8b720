#pragma once

#include <string>
#include <vector>

#include "prism/corpus/catalog.hpp"
#include "prism/distill/prompt.hpp"
#include "prism/metrics/gptscore.hpp"
#include "prism/student/features.hpp"
#include "prism/student/model.hpp"

namespace prism::student {

// The trained student as a GPTScore evaluator. A context that matches the
// prompt template is re-fitted to the source window the same way training
// inputs are; anything else is encoded as-is and cut to max_source_len.
template <typename T>
class StudentEvaluator : public metrics::EvaluatorModel {
 public:
  StudentEvaluator(const Model<T>& model, const Vocabulary& vocab, distill::PromptTemplate tmpl = {},
                   const corpus::Catalog* catalog = nullptr)
      : model_(model), vocab_(vocab), tmpl_(std::move(tmpl)), catalog_(catalog) {}

  std::vector<double> token_log_probs(const metrics::EvalContext& context, const std::vector<std::string>& tokens) const override {
    const auto& cfg = model_.config();
    if (tokens.size() > cfg.max_target_len)
      throw metrics::ProviderError("explanation has " + std::to_string(tokens.size()) + " tokens, student scores at most " +
                                   std::to_string(cfg.max_target_len));
    std::vector<int> source;
    if (auto f = tmpl_.extract(context.text)) {
      auto history = distill::split_history(f->history, catalog_);
      source = encode_source(vocab_, tmpl_, history, f->item, cfg.max_source_len);
    } else {
      source = vocab_.encode(context.text);
      if (source.size() > cfg.max_source_len) source.resize(cfg.max_source_len);
    }
    if (source.empty()) source.push_back(Vocabulary::kUnknown);
    std::vector<int> target;
    for (const auto& t : tokens) target.push_back(vocab_.id(t));
    return student::token_log_probs(model_, source, model_.user_row(context.user_id), target);
  }

  std::string name() const override { return "student-self-score"; }

 private:
  const Model<T>& model_;
  const Vocabulary& vocab_;
  distill::PromptTemplate tmpl_;
  const corpus::Catalog* catalog_;
};

}  // namespace prism::student
