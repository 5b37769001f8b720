#pragma once

#include <cmath>
#include <limits>
#include <span>

#include <boost/math/distributions/students_t.hpp>

#include "prism/common.hpp"
#include "prism/stats.hpp"

namespace prism::humaneval {

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
  double mean_difference = 0.0;
  std::size_t n = 0;
  // Differences have zero variance. All-zero differences report t = 0,
  // p = 1; a constant non-zero difference reports t = +-inf, p = 0.
  bool degenerate = false;
};

inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw InputError("paired t-test needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  TTestResult r;
  r.n = d.size();
  r.df = static_cast<double>(d.size() - 1);
  r.mean_difference = stats::mean(d);
  const double sd = stats::sample_std(d);
  if (sd == 0.0) {
    r.degenerate = true;
    if (r.mean_difference == 0.0) return r;
    r.t = std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
    r.p = 0.0;
    return r;
  }
  r.t = r.mean_difference / (sd / std::sqrt(static_cast<double>(d.size())));
  boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

}  // namespace prism::humaneval
