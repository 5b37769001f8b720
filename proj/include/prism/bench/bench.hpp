#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/bench/alloc_tracker.hpp"
#include "prism/common.hpp"
#include "prism/stats.hpp"

namespace prism::bench {

inline constexpr int kBenchReportVersion = 1;
inline constexpr const char* kMemoryLabel = "peak memory (host)";
inline constexpr const char* kTimedRegion = "prompt rendering + tokenization + generation + detokenization";

struct BenchEntry {
  std::string system;
  std::size_t param_count = 0;
  double mean_latency_ms = 0;
  double p50_latency_ms = 0;
  double p95_latency_ms = 0;
  std::size_t peak_memory_bytes = 0;
  std::size_t runs = 0;
  std::size_t warmup = 0;

  bool operator==(const BenchEntry&) const = default;
};

struct BenchReport {
  std::vector<BenchEntry> entries;  // first entry is the baseline for ratios
  bool memory_tracked = false;

  bool operator==(const BenchReport&) const = default;
};

// Produces one explanation for instance i; throwing aborts the run.
using Subject = std::function<std::string(std::size_t)>;

// Runs `warmup` untimed then `runs` timed calls, cycling through the
// instances. Latency per call from the steady clock; peak memory is the
// allocator high-water mark above the level at the start of the timed
// region.
inline BenchEntry bench_generation(const std::string& system, std::size_t param_count, const Subject& subject, std::size_t instance_count,
                                   std::size_t runs, std::size_t warmup) {
  if (runs < 1) throw InputError("bench needs runs >= 1");
  if (instance_count < 1) throw InputError("bench needs at least one instance");
  auto call = [&](std::size_t k) {
    const std::size_t i = k % instance_count;
    try {
      (void)subject(i);
    } catch (const std::exception& e) {
      throw Error("bench subject '" + system + "' failed on instance " + std::to_string(i) + ": " + e.what());
    }
  };
  for (std::size_t k = 0; k < warmup; ++k) call(k);
  std::vector<double> ms;
  ms.reserve(runs);
  PeakScope scope;
  for (std::size_t k = 0; k < runs; ++k) {
    auto t0 = std::chrono::steady_clock::now();
    call(warmup + k);
    auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  BenchEntry e;
  e.system = system;
  e.param_count = param_count;
  e.mean_latency_ms = stats::mean(ms);
  e.p50_latency_ms = stats::percentile(ms, 0.50);
  e.p95_latency_ms = stats::percentile(ms, 0.95);
  e.peak_memory_bytes = scope.peak_bytes();
  e.runs = runs;
  e.warmup = warmup;
  return e;
}

struct Ratio {
  std::string baseline, subject;
  double speedup = 0;                    // baseline latency / subject latency
  std::optional<double> memory_ratio;    // baseline peak / subject peak
};

inline std::vector<Ratio> compare(const BenchReport& r) {
  std::vector<Ratio> out;
  if (r.entries.size() < 2) return out;
  const auto& base = r.entries.front();
  for (std::size_t i = 1; i < r.entries.size(); ++i) {
    const auto& s = r.entries[i];
    Ratio q{base.system, s.system, s.mean_latency_ms > 0 ? base.mean_latency_ms / s.mean_latency_ms : 0.0, std::nullopt};
    if (s.peak_memory_bytes > 0) q.memory_ratio = static_cast<double>(base.peak_memory_bytes) / static_cast<double>(s.peak_memory_bytes);
    out.push_back(q);
  }
  return out;
}

inline std::string human_bytes(std::size_t b) {
  char buf[32];
  const double x = static_cast<double>(b);
  if (x >= 1e9) std::snprintf(buf, sizeof buf, "%.2f GB", x / 1e9);
  else if (x >= 1e6) std::snprintf(buf, sizeof buf, "%.2f MB", x / 1e6);
  else std::snprintf(buf, sizeof buf, "%.2f KB", x / 1e3);
  return buf;
}

inline std::string human_count(std::size_t n) {
  char buf[32];
  const double x = static_cast<double>(n);
  if (x >= 1e9) std::snprintf(buf, sizeof buf, "%.2fB", x / 1e9);
  else if (x >= 1e6) std::snprintf(buf, sizeof buf, "%.2fM", x / 1e6);
  else if (x >= 1e3) std::snprintf(buf, sizeof buf, "%.1fK", x / 1e3);
  else std::snprintf(buf, sizeof buf, "%zu", n);
  return buf;
}

// Aligned comparison table; ratio rows appear only with two or more entries.
inline std::string render_table(const BenchReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %10s %14s %10s %10s %20s\n", "system", "params", "latency (ms)", "p50", "p95", kMemoryLabel);
  out += buf;
  for (const auto& e : r.entries) {
    std::snprintf(buf, sizeof buf, "%-24s %10s %14.2f %10.2f %10.2f %20s\n", e.system.c_str(), human_count(e.param_count).c_str(), e.mean_latency_ms,
                  e.p50_latency_ms, e.p95_latency_ms, human_bytes(e.peak_memory_bytes).c_str());
    out += buf;
  }
  for (const auto& q : compare(r)) {
    if (q.memory_ratio)
      std::snprintf(buf, sizeof buf, "%s vs %s: ≈%.2f× faster, ≈%.2f× lower %s\n", q.subject.c_str(), q.baseline.c_str(), q.speedup, *q.memory_ratio, kMemoryLabel);
    else
      std::snprintf(buf, sizeof buf, "%s vs %s: ≈%.2f× faster\n", q.subject.c_str(), q.baseline.c_str(), q.speedup);
    out += buf;
  }
  if (!r.memory_tracked) out += "(heap tracking unavailable in this binary; memory column is zero)\n";
  return out;
}

inline nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"system", e.system}, {"param_count", e.param_count}, {"mean_latency_ms", e.mean_latency_ms},
                       {"p50_latency_ms", e.p50_latency_ms}, {"p95_latency_ms", e.p95_latency_ms}, {"peak_memory_bytes", e.peak_memory_bytes},
                       {"runs", e.runs}, {"warmup", e.warmup}});
  nlohmann::json ratios = nlohmann::json::array();
  for (const auto& q : compare(r))
    ratios.push_back({{"baseline", q.baseline}, {"subject", q.subject}, {"speedup", q.speedup},
                      {"memory_ratio", q.memory_ratio ? nlohmann::json(*q.memory_ratio) : nlohmann::json(nullptr)}});
  return {{"report_version", kBenchReportVersion}, {"memory_label", kMemoryLabel}, {"timed_region", kTimedRegion},
          {"memory_tracked", r.memory_tracked}, {"entries", entries}, {"ratios", ratios}};
}

inline BenchReport bench_report_from_json(const nlohmann::json& j) {
  BenchReport r;
  try {
    r.memory_tracked = j.at("memory_tracked").get<bool>();
    for (const auto& e : j.at("entries"))
      r.entries.push_back({e.at("system").get<std::string>(), e.at("param_count").get<std::size_t>(), e.at("mean_latency_ms").get<double>(),
                           e.at("p50_latency_ms").get<double>(), e.at("p95_latency_ms").get<double>(), e.at("peak_memory_bytes").get<std::size_t>(),
                           e.at("runs").get<std::size_t>(), e.at("warmup").get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed bench report: ") + e.what());
  }
  return r;
}

}  // namespace prism::bench
