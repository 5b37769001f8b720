#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "prism/metrics/bertscore.hpp"
#include "prism/text.hpp"

namespace prism::metrics {

// What the evaluator conditions on: the prompt text and, for user-aware
// evaluators, the user id (empty when unknown).
struct EvalContext {
  std::string text;
  std::string user_id;
};

class EvaluatorModel {
 public:
  virtual ~EvaluatorModel() = default;
  // Natural-log probability of each explanation token given the context
  // and the preceding tokens.
  virtual std::vector<double> token_log_probs(const EvalContext& context, const std::vector<std::string>& tokens) const = 0;
  virtual std::string name() const = 0;
};

// Assigns 1/|V| to every token.
class UniformEvaluator : public EvaluatorModel {
 public:
  explicit UniformEvaluator(std::size_t vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size_ == 0) throw InputError("uniform evaluator needs a non-empty vocabulary");
  }
  std::vector<double> token_log_probs(const EvalContext&, const std::vector<std::string>& tokens) const override {
    return std::vector<double>(tokens.size(), -std::log(static_cast<double>(vocab_size_)));
  }
  std::string name() const override { return "uniform(|V|=" + std::to_string(vocab_size_) + ")"; }

 private:
  std::size_t vocab_size_;
};

// Mean per-token log-likelihood. Tokens come from the student tokenizer so
// the student can act as its own evaluator.
inline double gpt_score(std::string_view explanation, const EvalContext& context, const EvaluatorModel& evaluator) {
  auto tokens = text::tokenize(explanation);
  if (tokens.empty()) throw InputError("gpt_score: explanation has no tokens");
  auto lps = evaluator.token_log_probs(context, tokens);
  if (lps.size() != tokens.size())
    throw ProviderError("evaluator returned " + std::to_string(lps.size()) + " log-probs for " + std::to_string(tokens.size()) + " tokens");
  double sum = 0.0;
  for (double lp : lps) {
    if (!(lp <= 1e-12)) throw ProviderError("evaluator returned an invalid log-prob " + std::to_string(lp));
    sum += lp;
  }
  return sum / static_cast<double>(tokens.size());
}

inline double gpt_score(std::string_view explanation, std::string_view context, const EvaluatorModel& evaluator) {
  return gpt_score(explanation, EvalContext{std::string(context), {}}, evaluator);
}

}  // namespace prism::metrics
