#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "prism/common.hpp"
#include "prism/text.hpp"

namespace prism::metrics {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline RougeScore make_score(double matches, double pred_count, double ref_count) {
  RougeScore s;
  if (pred_count <= 0 || ref_count <= 0) return s;
  s.precision = matches / pred_count;
  s.recall = matches / ref_count;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

// Clipped n-gram overlap over pre-tokenized sequences.
inline RougeScore rouge_n_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& ref, std::size_t n) {
  if (n != 1 && n != 2) throw InputError("rouge_n supports n = 1 or 2, got " + std::to_string(n));
  auto grams = [n](const std::vector<std::string>& t) {
    std::map<std::vector<std::string>, std::size_t> m;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++m[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return m;
  };
  auto gp = grams(pred), gr = grams(ref);
  std::size_t matches = 0;
  for (const auto& [g, c] : gp) {
    auto it = gr.find(g);
    if (it != gr.end()) matches += std::min(c, it->second);
  }
  const double np = pred.size() >= n ? static_cast<double>(pred.size() - n + 1) : 0.0;
  const double nr = ref.size() >= n ? static_cast<double>(ref.size() - n + 1) : 0.0;
  return make_score(static_cast<double>(matches), np, nr);
}

// Two-row dynamic programme, O(|a| |b|) time.
inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline RougeScore rouge_l_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& ref) {
  return make_score(static_cast<double>(lcs_length(pred, ref)), static_cast<double>(pred.size()), static_cast<double>(ref.size()));
}

inline RougeScore rouge_n(std::string_view prediction, std::string_view reference, std::size_t n) {
  return rouge_n_tokens(text::overlap_tokens(prediction), text::overlap_tokens(reference), n);
}

inline RougeScore rouge_l(std::string_view prediction, std::string_view reference) {
  return rouge_l_tokens(text::overlap_tokens(prediction), text::overlap_tokens(reference));
}

}  // namespace prism::metrics
