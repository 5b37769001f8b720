#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/metrics/bertscore.hpp"
#include "prism/metrics/gptscore.hpp"
#include "prism/metrics/rouge.hpp"

namespace prism::metrics {

inline constexpr int kReportVersion = 1;

// Report keys in canonical order.
inline const std::vector<std::string>& all_metrics() {
  static const std::vector<std::string> names = {"rouge1", "rouge2", "rougeL", "bertscore_f1", "gptscore"};
  return names;
}

// Accepts the CLI spelling ("bertscore") as well as the report key.
inline std::vector<std::string> parse_metric_list(std::string_view csv) {
  std::vector<std::string> wanted;
  for (auto& raw : text::split(csv, ",")) {
    auto name = text::trim(raw);
    if (name.empty()) continue;
    if (name == "bertscore") name = "bertscore_f1";
    if (std::find(all_metrics().begin(), all_metrics().end(), name) == all_metrics().end())
      throw InputError("unknown metric '" + name + "' (expected rouge1, rouge2, rougeL, bertscore, gptscore)");
    wanted.push_back(name);
  }
  if (wanted.empty()) throw InputError("no metrics requested");
  std::vector<std::string> ordered;
  for (const auto& m : all_metrics())
    if (std::find(wanted.begin(), wanted.end(), m) != wanted.end()) ordered.push_back(m);
  return ordered;
}

struct EvalPair {
  std::string prediction;
  std::string reference;
  EvalContext context;
};

struct PairScores {
  std::map<std::string, std::optional<double>> values;  // nullopt = excluded
  std::map<std::string, std::string> errors;
};

struct MetricReport {
  nlohmann::json config;
  std::vector<std::string> metrics;
  std::vector<PairScores> per_pair;
  std::map<std::string, std::optional<double>> means;
  std::map<std::string, std::size_t> counts;  // pairs contributing to each mean
  std::size_t excluded = 0;                   // pairs with at least one failed metric
};

struct EvaluationSetup {
  std::vector<std::string> metrics = all_metrics();
  const EmbeddingProvider* embedder = nullptr;
  const EvaluatorModel* evaluator = nullptr;
};

inline MetricReport evaluate_corpus(const std::vector<EvalPair>& pairs, const EvaluationSetup& setup) {
  MetricReport report;
  report.metrics = setup.metrics;
  for (const auto& m : setup.metrics) {
    if (m == "bertscore_f1" && !setup.embedder) throw InputError("bertscore requested without an embedding provider");
    if (m == "gptscore" && !setup.evaluator) throw InputError("gptscore requested without an evaluator");
  }
  report.config = {{"report_version", kReportVersion},
                   {"tokenization", std::string(text::kOverlapTokenization)},
                   {"metrics", setup.metrics},
                   {"providers",
                    {{"bertscore", setup.embedder ? nlohmann::json(setup.embedder->name()) : nlohmann::json(nullptr)},
                     {"gptscore", setup.evaluator ? nlohmann::json(setup.evaluator->name()) : nlohmann::json(nullptr)}}}};

  for (const auto& p : pairs) {
    PairScores s;
    auto pred = text::overlap_tokens(p.prediction);
    auto ref = text::overlap_tokens(p.reference);
    for (const auto& m : setup.metrics) {
      try {
        double v = 0;
        if (m == "rouge1") v = rouge_n_tokens(pred, ref, 1).f1;
        else if (m == "rouge2") v = rouge_n_tokens(pred, ref, 2).f1;
        else if (m == "rougeL") v = rouge_l_tokens(pred, ref).f1;
        else if (m == "bertscore_f1") v = bertscore_tokens(pred, ref, *setup.embedder).f1;
        else v = gpt_score(p.prediction, p.context, *setup.evaluator);
        s.values[m] = v;
      } catch (const Error& e) {
        s.values[m] = std::nullopt;
        s.errors[m] = e.what();
      }
    }
    if (!s.errors.empty()) ++report.excluded;
    report.per_pair.push_back(std::move(s));
  }
  for (const auto& m : setup.metrics) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& s : report.per_pair)
      if (auto v = s.values.at(m)) {
        sum += *v;
        ++n;
      }
    report.counts[m] = n;
    report.means[m] = n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
  }
  return report;
}

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < r.per_pair.size(); ++i) {
    nlohmann::json row = {{"index", i}};
    for (const auto& m : r.metrics) row[m] = opt_json(r.per_pair[i].values.at(m));
    if (!r.per_pair[i].errors.empty()) row["errors"] = r.per_pair[i].errors;
    per.push_back(std::move(row));
  }
  nlohmann::json means = nlohmann::json::object(), counts = nlohmann::json::object();
  for (const auto& m : r.metrics) {
    means[m] = opt_json(r.means.at(m));
    counts[m] = r.counts.at(m);
  }
  return {{"config", r.config}, {"pairs", r.per_pair.size()}, {"per_pair", per}, {"means", means}, {"counts", counts}, {"excluded", r.excluded}};
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.config = j.at("config");
    r.metrics = r.config.at("metrics").get<std::vector<std::string>>();
    for (const auto& row : j.at("per_pair")) {
      PairScores s;
      for (const auto& m : r.metrics) {
        const auto& v = row.at(m);
        s.values[m] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      }
      if (row.contains("errors")) s.errors = row["errors"].get<std::map<std::string, std::string>>();
      r.per_pair.push_back(std::move(s));
    }
    for (const auto& m : r.metrics) {
      const auto& v = j.at("means").at(m);
      r.means[m] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      r.counts[m] = j.at("counts").at(m).get<std::size_t>();
    }
    r.excluded = j.at("excluded").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("<report>", 0, std::string("malformed metric report: ") + e.what());
  }
  return r;
}

// Aligned text rendering of the corpus means.
inline std::string render_means(const MetricReport& r) {
  std::string out;
  char buf[128];
  for (const auto& m : r.metrics) {
    auto v = r.means.at(m);
    if (v) std::snprintf(buf, sizeof buf, "%-14s %10.4f  (n=%zu)\n", m.c_str(), *v, r.counts.at(m));
    else std::snprintf(buf, sizeof buf, "%-14s %10s  (n=0)\n", m.c_str(), "n/a");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-14s %10zu\n", "excluded", r.excluded);
  out += buf;
  return out;
}

}  // namespace prism::metrics
