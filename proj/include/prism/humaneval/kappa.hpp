#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "prism/common.hpp"

namespace prism::humaneval {

inline constexpr std::size_t kLikertCategories = 5;

// counts[i][j]: raters who put subject i in category j. Every row sums to
// the same rater count.
struct AgreementMatrix {
  std::vector<std::vector<std::size_t>> counts;

  std::size_t subjects() const { return counts.size(); }
  std::size_t categories() const { return counts.empty() ? 0 : counts.front().size(); }

  std::size_t raters() const {
    if (counts.empty()) return 0;
    std::size_t n = 0;
    for (auto c : counts.front()) n += c;
    return n;
  }

  void validate() const {
    if (counts.empty()) throw InputError("agreement matrix has no subjects");
    const auto k = categories(), n = raters();
    if (k == 0) throw InputError("agreement matrix has no categories");
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i].size() != k) throw InputError("agreement matrix row " + std::to_string(i) + " has the wrong number of categories");
      std::size_t s = 0;
      for (auto c : counts[i]) s += c;
      if (s != n) throw InputError("agreement matrix row " + std::to_string(i) + " sums to " + std::to_string(s) + ", expected " + std::to_string(n));
    }
    if (n < 2) throw InputError("Fleiss' kappa needs at least 2 raters per subject");
  }
};

// Fleiss' kappa. When every rating falls in one category (P_e = 1) the
// statistic is 0/0; by convention this returns 1.0.
inline double fleiss_kappa(const AgreementMatrix& m) {
  m.validate();
  const double N = static_cast<double>(m.subjects());
  const double n = static_cast<double>(m.raters());
  const std::size_t k = m.categories();
  std::vector<double> p(k, 0.0);
  double p_bar = 0.0;
  for (const auto& row : m.counts) {
    double sq = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      sq += static_cast<double>(row[j]) * static_cast<double>(row[j]);
      p[j] += static_cast<double>(row[j]);
    }
    p_bar += (sq - n) / (n * (n - 1));
  }
  p_bar /= N;
  double p_e = 0.0;
  for (double pj : p) p_e += (pj / (N * n)) * (pj / (N * n));
  if (p_e >= 1.0 - 1e-15) {
    if (p_bar >= 1.0 - 1e-15) return 1.0;
    throw std::logic_error("fleiss_kappa: P_e = 1 with P < 1 is impossible");
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

// Builds the matrix from per-subject category labels in [1, k]. Subjects
// with fewer raters than the maximum are dropped so rows share one n.
inline AgreementMatrix agreement_from_labels(const std::map<std::string, std::vector<int>>& labels, std::size_t k = kLikertCategories) {
  std::size_t n = 0;
  for (const auto& [_, v] : labels) n = std::max(n, v.size());
  AgreementMatrix m;
  for (const auto& [_, v] : labels) {
    if (v.size() != n) continue;
    std::vector<std::size_t> row(k, 0);
    for (int c : v) {
      if (c < 1 || static_cast<std::size_t>(c) > k) throw InputError("category " + std::to_string(c) + " outside 1.." + std::to_string(k));
      ++row[static_cast<std::size_t>(c - 1)];
    }
    m.counts.push_back(std::move(row));
  }
  return m;
}

}  // namespace prism::humaneval
