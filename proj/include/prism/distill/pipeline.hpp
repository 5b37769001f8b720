#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "prism/distill/prompt.hpp"
#include "prism/distill/teacher.hpp"
#include "prism/stats.hpp"

namespace prism::distill {

struct DistilledSample {
  std::string user_id;
  std::vector<std::string> history;  // titles, oldest first
  std::string recommended_item;      // title
  std::string golden_explanation;

  bool operator==(const DistilledSample&) const = default;
};

struct LatencySummary {
  double mean_ms = 0, p50_ms = 0, p95_ms = 0, max_ms = 0;
};

struct RunReport {
  std::size_t instances = 0;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::map<std::string, std::size_t> failures_by_kind;
  LatencySummary latency;
};

struct DistillOptions {
  std::size_t parallelism = 4;
  // Outputs longer than this many tokens count as teacher errors.
  std::size_t max_output_tokens = 128;
  RetryPolicy retry;
};

struct DistillResult {
  std::vector<DistilledSample> samples;
  RunReport report;
};

inline LatencySummary summarize_latency(const std::vector<double>& ms) {
  LatencySummary s;
  if (ms.empty()) return s;
  s.mean_ms = stats::mean(ms);
  s.p50_ms = stats::percentile(ms, 0.50);
  s.p95_ms = stats::percentile(ms, 0.95);
  s.max_ms = *std::max_element(ms.begin(), ms.end());
  return s;
}

// Rejects empty and over-long teacher outputs.
inline TeacherResponse validate_output(TeacherResponse resp, std::size_t max_tokens) {
  if (!resp.ok()) return resp;
  auto trimmed = text::trim(resp.text());
  if (trimmed.empty()) {
    resp.outcome = TeacherError{TeacherError::Kind::empty, "empty explanation", false};
  } else if (auto n = text::tokenize(trimmed).size(); n > max_tokens) {
    resp.outcome = TeacherError{TeacherError::Kind::too_long, std::to_string(n) + " tokens exceeds cap", false};
  } else {
    resp.outcome = std::move(trimmed);
  }
  return resp;
}

// Formats each instance's prompt, queries the teacher with up to
// `parallelism` requests in flight, and keeps successful answers in input
// order. Per-sample failures are counted, never fatal. Prompt rendering
// errors (unknown item ids) are raised before any teacher call.
inline DistillResult run_distillation(std::span<const corpus::RecommendationInstance> instances, const Teacher& teacher,
                                      const PromptTemplate& tmpl, const corpus::Catalog& catalog, const DistillOptions& options = {}) {
  const std::size_t n = instances.size();
  std::vector<std::string> prompts;
  prompts.reserve(n);
  for (const auto& inst : instances) prompts.push_back(render_prompt(tmpl, inst, catalog));

  std::vector<TeacherResponse> responses(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
      responses[i] = validate_output(complete_with_retries(teacher, prompts[i], options.retry), options.max_output_tokens);
  };
  const std::size_t workers = std::min(std::max<std::size_t>(options.parallelism, 1), n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  DistillResult result;
  result.report.instances = n;
  std::vector<double> latencies;
  latencies.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& resp = responses[i];
    latencies.push_back(resp.latency_ms);
    if (!resp.ok()) {
      ++result.report.failed;
      ++result.report.failures_by_kind[to_string(resp.error().kind)];
      continue;
    }
    const auto& inst = instances[i];
    result.samples.push_back(
        {inst.user_id, history_titles(inst.history, catalog), catalog.at(inst.recommended_item).title, resp.text()});
    ++result.report.succeeded;
  }
  result.report.latency = summarize_latency(latencies);
  return result;
}

inline jsonl::json to_json(const DistilledSample& s) {
  return {{"user_id", s.user_id}, {"history", s.history}, {"recommended_item", s.recommended_item}, {"golden_explanation", s.golden_explanation}};
}

inline DistilledSample sample_from_json(const jsonl::json& j, const std::string& source = "<sample>", std::size_t line = 1) {
  if (!j.is_object()) throw ParseError(source, line, "distilled sample must be a JSON object");
  DistilledSample s;
  s.user_id = jsonl::require_string(j, "user_id", source, line);
  s.recommended_item = jsonl::require_string(j, "recommended_item", source, line);
  s.golden_explanation = jsonl::require_string(j, "golden_explanation", source, line);
  if (text::trim(s.golden_explanation).empty()) throw ParseError(source, line, "empty golden_explanation");
  auto it = j.find("history");
  if (it == j.end() || !it->is_array()) throw ParseError(source, line, "missing array field 'history'");
  for (const auto& v : *it) {
    if (!v.is_string()) throw ParseError(source, line, "history entries must be strings");
    s.history.push_back(v.get<std::string>());
  }
  return s;
}

inline std::vector<DistilledSample> read_dataset(const std::filesystem::path& path) {
  auto in = jsonl::open_in(path);
  std::vector<DistilledSample> out;
  jsonl::for_each_line(in, [&](std::size_t n, const std::string& line) {
    out.push_back(sample_from_json(jsonl::parse_line(path.string(), n, line), path.string(), n));
  });
  return out;
}

inline void write_dataset(const std::filesystem::path& path, std::span<const DistilledSample> samples) {
  jsonl::write_all(path, samples, [](const DistilledSample& s) { return to_json(s); });
}

inline jsonl::json to_json(const RunReport& r) {
  jsonl::json failures = jsonl::json::object();
  for (const auto& [k, v] : r.failures_by_kind) failures[k] = v;
  return {{"instances", r.instances},
          {"succeeded", r.succeeded},
          {"failed", r.failed},
          {"failures_by_kind", failures},
          {"latency_ms", {{"mean", r.latency.mean_ms}, {"p50", r.latency.p50_ms}, {"p95", r.latency.p95_ms}, {"max", r.latency.max_ms}}}};
}

}  // namespace prism::distill
