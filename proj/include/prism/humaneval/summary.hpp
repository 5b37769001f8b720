#pragma once

#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/humaneval/kappa.hpp"
#include "prism/humaneval/session.hpp"
#include "prism/humaneval/ttest.hpp"
#include "prism/stats.hpp"

namespace prism::humaneval {

// Table-style "mean ± std" with two decimals.
inline std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, std);
  return buf;
}

struct Descriptive {
  double mean = 0, median = 0, std = 0;
  std::size_t n = 0;
};

inline Descriptive describe(const std::vector<double>& v) {
  return {stats::mean(v), stats::median(v), stats::sample_std(v), v.size()};
}

inline nlohmann::json to_json(const Descriptive& d) {
  return {{"mean", d.mean}, {"median", d.median}, {"std", d.std}, {"n", d.n}, {"display", format_mean_std(d.mean, d.std)}};
}

inline nlohmann::json to_json(const TTestResult& r) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"t", num(r.t)}, {"df", r.df}, {"p", r.p}, {"mean_difference", r.mean_difference}, {"n", r.n}, {"degenerate", r.degenerate}};
}

// Statistics over non-calibration ratings: per-system per-dimension
// descriptives, Fleiss' kappa per dimension and pooled (raw 1-5
// categories; subjects are (item, system) pairs rated by every
// annotator), and paired t-tests between every pair of systems on
// per-item mean scores.
inline nlohmann::json summarize(const Session& session) {
  const auto systems = session.systems();
  const auto& items = session.items();
  const auto ratings = session.ratings();
  const std::size_t n_annot = session.annotators().size();

  std::vector<LikertRating> main;
  std::size_t calibration_ratings = 0;
  for (const auto& r : ratings) {
    if (items[r.item_index].calibration) ++calibration_ratings;
    else main.push_back(r);
  }

  nlohmann::json out;
  out["session_id"] = session.id();
  out["kappa_categories"] = "raw 1-5 Likert scores (k = 5)";
  out["t_test_unit"] = "per-item mean across annotators, paired on items";
  out["calibration_items_excluded"] = std::count_if(items.begin(), items.end(), [](const auto& i) { return i.calibration; });
  out["calibration_ratings_excluded"] = calibration_ratings;
  out["ratings_used"] = main.size();
  nlohmann::json warnings = nlohmann::json::array();

  // per system, per dimension
  nlohmann::json per_system = nlohmann::json::object();
  std::vector<std::string> active;
  for (const auto& s : systems) {
    std::vector<double> dims[3];
    for (const auto& r : main)
      if (r.system == s)
        for (std::size_t d = 0; d < 3; ++d) dims[d].push_back(r.score(d));
    if (dims[0].empty()) {
      warnings.push_back("system '" + s + "' has no ratings and is excluded");
      continue;
    }
    active.push_back(s);
    nlohmann::json j;
    for (std::size_t d = 0; d < 3; ++d) j[kDimensions[d]] = to_json(describe(dims[d]));
    per_system[s] = j;
  }
  out["systems"] = per_system;

  // kappa
  std::map<std::tuple<std::size_t, std::string>, std::vector<const LikertRating*>> by_subject;
  for (const auto& r : main) by_subject[{r.item_index, r.system}].push_back(&r);
  nlohmann::json kappa = nlohmann::json::object();
  AgreementMatrix pooled;
  for (std::size_t d = 0; d < 3; ++d) {
    AgreementMatrix m;
    for (const auto& [key, rs] : by_subject) {
      if (rs.size() != n_annot) continue;
      std::vector<std::size_t> row(kLikertCategories, 0);
      for (const auto* r : rs) ++row[static_cast<std::size_t>(r->score(d) - 1)];
      m.counts.push_back(row);
      pooled.counts.push_back(row);
    }
    if (n_annot < 2 || m.counts.empty()) kappa[kDimensions[d]] = nullptr;
    else kappa[kDimensions[d]] = {{"kappa", fleiss_kappa(m)}, {"subjects", m.subjects()}, {"raters", n_annot}};
  }
  if (n_annot < 2 || pooled.counts.empty()) {
    kappa["pooled"] = nullptr;
    warnings.push_back("kappa needs at least 2 annotators and one fully rated subject");
  } else {
    kappa["pooled"] = {{"kappa", fleiss_kappa(pooled)}, {"subjects", pooled.subjects()}, {"raters", n_annot}};
  }
  out["kappa"] = kappa;

  // paired t-tests on per-item means
  auto item_means = [&](const std::string& s, std::size_t d) {
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (const auto& r : main)
      if (r.system == s) {
        auto& a = acc[r.item_index];
        a.first += r.score(d);
        ++a.second;
      }
    std::map<std::size_t, double> m;
    for (auto& [i, a] : acc) m[i] = a.first / static_cast<double>(a.second);
    return m;
  };
  nlohmann::json tests = nlohmann::json::array();
  for (std::size_t i = 0; i < active.size(); ++i)
    for (std::size_t k = i + 1; k < active.size(); ++k) {
      nlohmann::json entry = {{"a", active[i]}, {"b", active[k]}};
      for (std::size_t d = 0; d < 3; ++d) {
        auto ma = item_means(active[i], d), mb = item_means(active[k], d);
        std::vector<double> va, vb;
        for (const auto& [item, v] : ma)
          if (mb.count(item)) {
            va.push_back(v);
            vb.push_back(mb[item]);
          }
        if (va.size() < 2) entry[kDimensions[d]] = nullptr;
        else entry[kDimensions[d]] = to_json(paired_t_test(va, vb));
      }
      tests.push_back(std::move(entry));
    }
  out["t_tests"] = tests;
  out["warnings"] = warnings;
  return out;
}

// Aligned text table in the "mean ± std" style.
inline std::string render_summary(const nlohmann::json& s) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %-16s %-16s %-16s\n", "system", "persuasiveness", "personalization", "faithfulness");
  out += buf;
  for (const auto& [name, dims] : s.at("systems").items()) {
    std::snprintf(buf, sizeof buf, "%-20s %-16s %-16s %-16s\n", name.c_str(), dims["persuasiveness"]["display"].get<std::string>().c_str(),
                  dims["personalization"]["display"].get<std::string>().c_str(), dims["faithfulness"]["display"].get<std::string>().c_str());
    out += buf;
  }
  const auto& k = s.at("kappa");
  if (!k["pooled"].is_null()) {
    std::snprintf(buf, sizeof buf, "Fleiss' kappa (pooled): %.2f\n", k["pooled"]["kappa"].get<double>());
    out += buf;
  }
  return out;
}

}  // namespace prism::humaneval
