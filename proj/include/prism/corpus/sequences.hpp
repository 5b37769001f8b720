#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "prism/corpus/catalog.hpp"

namespace prism::corpus {

inline constexpr std::size_t kMaxHistoryLength = 50;

struct InteractionHistory {
  std::string user_id;
  std::vector<std::string> items;
  // Empty, or parallel to items.
  std::vector<std::int64_t> timestamps;

  std::size_t size() const { return items.size(); }
  bool operator==(const InteractionHistory&) const = default;
};

struct RecommendationInstance {
  std::string user_id;
  InteractionHistory history;
  std::string recommended_item;

  bool operator==(const RecommendationInstance&) const = default;
};

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

struct IngestResult {
  std::vector<InteractionHistory> histories;  // one per user, in first-seen order
  std::size_t records = 0;
  std::size_t skipped_unresolved = 0;
};

// Keeps the `max_length` most recent interactions.
inline InteractionHistory truncate_history(InteractionHistory h, std::size_t max_length = kMaxHistoryLength) {
  if (h.items.size() <= max_length) return h;
  auto drop = static_cast<std::ptrdiff_t>(h.items.size() - max_length);
  h.items.erase(h.items.begin(), h.items.begin() + drop);
  if (!h.timestamps.empty()) h.timestamps.erase(h.timestamps.begin(), h.timestamps.begin() + drop);
  return h;
}

// Parses one interaction record: either a JSON object {user_id, item_id,
// timestamp} or a tab-separated "user<TAB>item<TAB>timestamp" line.
inline Interaction parse_interaction(const std::string& line, const std::string& source, std::size_t line_no) {
  Interaction rec;
  auto first = line.find_first_not_of(" \t");
  if (first != std::string::npos && line[first] == '{') {
    auto j = jsonl::parse_line(source, line_no, line);
    rec.user_id = jsonl::require_string(j, "user_id", source, line_no);
    rec.item_id = jsonl::require_string(j, "item_id", source, line_no);
    auto it = j.find("timestamp");
    if (it == j.end() || !it->is_number_integer())
      throw ParseError(source, line_no, "missing or non-integer field 'timestamp'");
    rec.timestamp = it->get<std::int64_t>();
    return rec;
  }
  auto fields = text::split(line, "\t");
  if (fields.size() != 3) throw ParseError(source, line_no, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
  rec.user_id = text::trim(fields[0]);
  rec.item_id = text::trim(fields[1]);
  if (rec.user_id.empty() || rec.item_id.empty()) throw ParseError(source, line_no, "empty user_id or item_id");
  try {
    std::size_t used = 0;
    auto ts = text::trim(fields[2]);
    rec.timestamp = std::stoll(ts, &used);
    if (used != ts.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ParseError(source, line_no, "timestamp is not an integer: '" + fields[2] + "'");
  }
  return rec;
}

// Groups interactions into chronological per-user histories. Timestamp ties
// keep input order. Records whose item is missing from the catalog are
// skipped and counted.
inline IngestResult build_histories(const std::vector<Interaction>& records, const Catalog& catalog,
                                    std::size_t max_length = kMaxHistoryLength) {
  IngestResult result;
  result.records = records.size();
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<const Interaction*>> grouped;
  std::vector<std::string> users;
  for (const auto& r : records) {
    if (!catalog.contains(r.item_id)) {
      ++result.skipped_unresolved;
      continue;
    }
    auto [it, inserted] = slot.emplace(r.user_id, grouped.size());
    if (inserted) {
      grouped.emplace_back();
      users.push_back(r.user_id);
    }
    grouped[it->second].push_back(&r);
  }
  result.histories.reserve(grouped.size());
  for (std::size_t u = 0; u < grouped.size(); ++u) {
    auto& g = grouped[u];
    std::stable_sort(g.begin(), g.end(), [](const Interaction* a, const Interaction* b) { return a->timestamp < b->timestamp; });
    InteractionHistory h{users[u], {}, {}};
    for (const auto* r : g) {
      h.items.push_back(r->item_id);
      h.timestamps.push_back(r->timestamp);
    }
    result.histories.push_back(truncate_history(std::move(h), max_length));
  }
  return result;
}

inline IngestResult ingest_interactions(std::istream& log, const Catalog& catalog, const std::string& source = "<interactions>",
                                        std::size_t max_length = kMaxHistoryLength) {
  std::vector<Interaction> records;
  jsonl::for_each_line(log, [&](std::size_t n, const std::string& line) { records.push_back(parse_interaction(line, source, n)); });
  return build_histories(records, catalog, max_length);
}

inline IngestResult ingest_interactions(const std::filesystem::path& path, const Catalog& catalog,
                                        std::size_t max_length = kMaxHistoryLength) {
  auto in = jsonl::open_in(path);
  return ingest_interactions(in, catalog, path.string(), max_length);
}

// Every (prefix, next item) pair of a history, oldest first.
inline std::vector<RecommendationInstance> prefix_instances(const InteractionHistory& h) {
  std::vector<RecommendationInstance> out;
  for (std::size_t k = 1; k < h.items.size(); ++k) {
    RecommendationInstance inst;
    inst.user_id = h.user_id;
    inst.history.user_id = h.user_id;
    inst.history.items.assign(h.items.begin(), h.items.begin() + static_cast<std::ptrdiff_t>(k));
    if (!h.timestamps.empty())
      inst.history.timestamps.assign(h.timestamps.begin(), h.timestamps.begin() + static_cast<std::ptrdiff_t>(k));
    inst.recommended_item = h.items[k];
    out.push_back(std::move(inst));
  }
  return out;
}

struct SplitResult {
  std::vector<RecommendationInstance> train;
  std::vector<RecommendationInstance> test;
  // Instances whose recommended item already occurs in their history.
  std::size_t repeated_recommendations = 0;
};

// Split rule: all prefix instances are enumerated in history order, a
// seeded shuffle picks exactly round(holdout_fraction * total) of them for
// test, and both sides keep enumeration order.
inline SplitResult split_sequences(std::span<const InteractionHistory> histories, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw InputError("holdout_fraction must lie strictly between 0 and 1, got " + std::to_string(holdout_fraction));
  std::vector<RecommendationInstance> all;
  for (const auto& h : histories) {
    auto inst = prefix_instances(h);
    std::move(inst.begin(), inst.end(), std::back_inserter(all));
  }
  SplitResult out;
  for (const auto& inst : all)
    if (std::find(inst.history.items.begin(), inst.history.items.end(), inst.recommended_item) != inst.history.items.end())
      ++out.repeated_recommendations;

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  auto n_test = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(all.size())));
  std::vector<char> is_test(all.size(), 0);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = 1;
  for (std::size_t i = 0; i < all.size(); ++i) (is_test[i] ? out.test : out.train).push_back(std::move(all[i]));
  return out;
}

struct DatasetStats {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_train_sequences = 0;
  std::size_t num_test_sequences = 0;

  bool operator==(const DatasetStats&) const = default;
};

// Users are counted over the histories (users too short to yield an
// instance still count) plus any user that only appears in the splits.
inline DatasetStats compute_stats(std::span<const RecommendationInstance> train, std::span<const RecommendationInstance> test,
                                  const Catalog& catalog, std::span<const InteractionHistory> histories = {}) {
  std::unordered_set<std::string> users;
  for (const auto& h : histories) users.insert(h.user_id);
  for (const auto& i : train) users.insert(i.user_id);
  for (const auto& i : test) users.insert(i.user_id);
  return {users.size(), catalog.size(), train.size(), test.size()};
}

inline jsonl::json to_json(const DatasetStats& s) {
  return {{"num_users", s.num_users},
          {"num_items", s.num_items},
          {"num_train_sequences", s.num_train_sequences},
          {"num_test_sequences", s.num_test_sequences}};
}

inline jsonl::json to_json(const RecommendationInstance& inst) {
  return {{"user_id", inst.user_id}, {"history", inst.history.items}, {"recommended_item", inst.recommended_item}};
}

inline RecommendationInstance instance_from_json(const jsonl::json& j, const std::string& source = "<instance>", std::size_t line = 1) {
  if (!j.is_object()) throw ParseError(source, line, "instance must be a JSON object");
  RecommendationInstance inst;
  inst.user_id = jsonl::require_string(j, "user_id", source, line);
  inst.recommended_item = jsonl::require_string(j, "recommended_item", source, line);
  auto it = j.find("history");
  if (it == j.end() || !it->is_array()) throw ParseError(source, line, "missing array field 'history'");
  for (const auto& v : *it) {
    if (!v.is_string()) throw ParseError(source, line, "history entries must be strings");
    inst.history.items.push_back(v.get<std::string>());
  }
  inst.history.user_id = inst.user_id;
  return inst;
}

inline std::vector<RecommendationInstance> read_instances(const std::filesystem::path& path) {
  auto in = jsonl::open_in(path);
  std::vector<RecommendationInstance> out;
  jsonl::for_each_line(in, [&](std::size_t n, const std::string& line) {
    out.push_back(instance_from_json(jsonl::parse_line(path.string(), n, line), path.string(), n));
  });
  return out;
}

inline void write_instances(const std::filesystem::path& path, std::span<const RecommendationInstance> instances) {
  jsonl::write_all(path, instances, [](const RecommendationInstance& i) { return to_json(i); });
}

// Every history and recommended item must resolve in the catalog.
inline void validate_instance(const RecommendationInstance& inst, const Catalog& catalog) {
  for (const auto& id : inst.history.items) catalog.at(id);
  catalog.at(inst.recommended_item);
}

}  // namespace prism::corpus
