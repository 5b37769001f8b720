#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "prism/common.hpp"
#include "prism/jsonl.hpp"

namespace prism::humaneval {

inline constexpr std::size_t kCalibrationItems = 10;
inline constexpr const char* kDimensions[] = {"persuasiveness", "personalization", "faithfulness"};

struct Candidate {
  std::string system;  // never leaves the server in annotator payloads
  std::string text;
};

struct EvaluationItem {
  std::size_t item_index = 0;
  std::string history_text;
  std::vector<Candidate> candidates;  // one per system, in system order
  bool calibration = false;
};

struct SystemOutputs {
  std::string system;
  std::vector<std::pair<std::string, std::string>> items;  // (history_text, explanation)
};

struct LikertRating {
  std::string annotator;
  std::size_t item_index = 0;
  std::string system;
  int persuasiveness = 0;
  int personalization = 0;
  int faithfulness = 0;

  int score(std::size_t dim) const { return dim == 0 ? persuasiveness : dim == 1 ? personalization : faithfulness; }
};

inline nlohmann::json to_json(const LikertRating& r) {
  return {{"annotator", r.annotator}, {"item_index", r.item_index}, {"system", r.system}, {"persuasiveness", r.persuasiveness},
          {"personalization", r.personalization}, {"faithfulness", r.faithfulness}};
}

inline void check_score(int s, const char* dim) {
  if (s < 1 || s > 5) throw InputError(std::string(dim) + " must be an integer 1-5, got " + std::to_string(s));
}

inline LikertRating rating_from_json(const nlohmann::json& j, const std::string& source, std::size_t line) {
  try {
    LikertRating r;
    r.annotator = j.at("annotator").get<std::string>();
    r.item_index = j.at("item_index").get<std::size_t>();
    r.system = j.at("system").get<std::string>();
    r.persuasiveness = j.at("persuasiveness").get<int>();
    r.personalization = j.at("personalization").get<int>();
    r.faithfulness = j.at("faithfulness").get<int>();
    check_score(r.persuasiveness, "persuasiveness");
    check_score(r.personalization, "personalization");
    check_score(r.faithfulness, "faithfulness");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, line, std::string("bad rating: ") + e.what());
  }
}

// Everything needed to rebuild a session deterministically.
struct SessionConfig {
  std::string session_id;
  std::uint64_t seed = 0;
  std::size_t sample_count = 0;  // 0 = every item
  std::vector<std::string> annotators;
  std::vector<SystemOutputs> systems;
  std::filesystem::path ratings_log;  // empty = in-memory only
};

// Reads one system's outputs: JSONL lines {"history_text", "explanation"};
// a "history" title list is joined with ", " when history_text is absent.
inline SystemOutputs read_system_outputs(const std::string& system, const std::filesystem::path& path) {
  SystemOutputs out{system, {}};
  auto in = jsonl::open_in(path);
  jsonl::for_each_line(in, [&](std::size_t n, const std::string& line) {
    auto j = jsonl::parse_line(path.string(), n, line);
    std::string history;
    if (j.contains("history_text")) history = jsonl::require_string(j, "history_text", path.string(), n);
    else if (j.contains("history") && j["history"].is_array()) {
      for (const auto& t : j["history"]) history += (history.empty() ? "" : ", ") + t.get<std::string>();
    }
    std::string text = j.contains("explanation") ? jsonl::require_string(j, "explanation", path.string(), n)
                                                 : jsonl::require_string(j, "golden_explanation", path.string(), n);
    out.items.emplace_back(std::move(history), std::move(text));
  });
  return out;
}

// Config JSON: {session_id, seed, sample_count, annotators: [ids] or
// annotator_count, systems: [{id, outputs: path} | {id, items: [{history_text,
// explanation}]}], ratings_log}. Relative paths resolve against base_dir.
inline SessionConfig session_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  SessionConfig c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  try {
    c.seed = j.value("seed", std::uint64_t{0});
    c.sample_count = j.value("sample_count", std::size_t{0});
    if (j.contains("annotators")) c.annotators = j["annotators"].get<std::vector<std::string>>();
    else {
      auto n = j.at("annotator_count").get<std::size_t>();
      for (std::size_t i = 1; i <= n; ++i) c.annotators.push_back("a" + std::to_string(i));
    }
    for (const auto& s : j.at("systems")) {
      auto id = s.at("id").get<std::string>();
      if (s.contains("outputs")) c.systems.push_back(read_system_outputs(id, resolve(s["outputs"].get<std::string>())));
      else {
        SystemOutputs so{id, {}};
        for (const auto& it : s.at("items")) so.items.emplace_back(it.value("history_text", ""), it.at("explanation").get<std::string>());
        c.systems.push_back(std::move(so));
      }
    }
    if (j.contains("ratings_log") && !j["ratings_log"].is_null()) c.ratings_log = resolve(j["ratings_log"].get<std::string>());
    c.session_id = j.value("session_id", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad session config: ") + e.what());
  }
  if (c.session_id.empty()) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    c.session_id = buf;
  }
  return c;
}

// Blinded, order-randomised annotation state. Not thread-safe on its own;
// the server serialises access.
class Session {
 public:
  explicit Session(SessionConfig cfg) : cfg_(std::move(cfg)) { build(); }

  const std::string& id() const { return cfg_.session_id; }
  const SessionConfig& config() const { return cfg_; }
  const std::vector<EvaluationItem>& items() const { return items_; }
  const std::vector<std::string>& annotators() const { return cfg_.annotators; }
  std::vector<std::string> systems() const {
    std::vector<std::string> s;
    for (const auto& so : cfg_.systems) s.push_back(so.system);
    return s;
  }

  // Item presentation order for one annotator (calibration items first).
  const std::vector<std::size_t>& order(const std::string& annotator) const { return queue(annotator).order; }

  // slot_order(a, item)[slot] = index into items()[item].candidates.
  const std::vector<std::size_t>& slot_order(const std::string& annotator, std::size_t item) const {
    return queue(annotator).slots.at(item);
  }

  bool has_annotator(const std::string& a) const { return queues_.count(a) > 0; }

  static std::string slot_label(std::size_t slot) {
    std::string s;
    do {
      s.insert(s.begin(), static_cast<char>('A' + slot % 26));
      slot = slot / 26;
    } while (slot-- > 0);
    return s;
  }

  std::optional<std::size_t> slot_index(const std::string& label, std::size_t n) const {
    for (std::size_t i = 0; i < n; ++i)
      if (slot_label(i) == label) return i;
    return std::nullopt;
  }

  bool item_complete(const std::string& annotator, std::size_t item) const {
    for (const auto& c : items_[item].candidates)
      if (!ratings_.count({annotator, item, c.system})) return false;
    return true;
  }

  std::size_t completed(const std::string& annotator) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < items_.size(); ++i) n += item_complete(annotator, i);
    return n;
  }

  // Annotator-facing payload for the next incomplete item, or a done
  // marker. Carries slot labels only.
  nlohmann::json next(const std::string& annotator) const {
    const auto& q = queue(annotator);
    nlohmann::json progress = {{"done", completed(annotator)}, {"total", items_.size()}};
    for (auto idx : q.order) {
      if (item_complete(annotator, idx)) continue;
      const auto& item = items_[idx];
      nlohmann::json cands = nlohmann::json::array();
      const auto& perm = q.slots.at(idx);
      for (std::size_t s = 0; s < perm.size(); ++s) {
        const auto& c = item.candidates[perm[s]];
        nlohmann::json entry = {{"slot", slot_label(s)}, {"explanation_text", c.text}};
        entry["rated"] = ratings_.count({annotator, idx, c.system}) > 0;
        cands.push_back(std::move(entry));
      }
      return {{"finished", false}, {"item_index", idx}, {"history_text", item.history_text}, {"calibration", item.calibration},
              {"candidates", cands}, {"progress", progress}};
    }
    return {{"finished", true}, {"progress", progress}};
  }

  // Resolves the slot to its system and upserts. Returns the stored rating.
  LikertRating rate(const std::string& annotator, std::size_t item, const std::string& slot, int persuasiveness, int personalization,
                    int faithfulness) {
    const auto& q = queue(annotator);
    if (item >= items_.size()) throw InputError("item_index " + std::to_string(item) + " out of range");
    const auto& perm = q.slots.at(item);
    auto s = slot_index(slot, perm.size());
    if (!s) throw InputError("unknown slot '" + slot + "'");
    check_score(persuasiveness, "persuasiveness");
    check_score(personalization, "personalization");
    check_score(faithfulness, "faithfulness");
    LikertRating r{annotator, item, items_[item].candidates[perm[*s]].system, persuasiveness, personalization, faithfulness};
    if (!cfg_.ratings_log.empty()) {
      auto out = append_log();
      jsonl::write(out, to_json(r));
      out.flush();
      if (!out) throw Error("failed to append to ratings log " + cfg_.ratings_log.string());
    }
    upsert(r);
    return r;
  }

  // Applies an existing ratings log; later lines win.
  std::size_t replay_log() {
    if (cfg_.ratings_log.empty() || !std::filesystem::exists(cfg_.ratings_log)) return 0;
    auto in = jsonl::open_in(cfg_.ratings_log);
    std::size_t n = 0;
    jsonl::for_each_line(in, [&](std::size_t line, const std::string& text) {
      auto r = rating_from_json(jsonl::parse_line(cfg_.ratings_log.string(), line, text), cfg_.ratings_log.string(), line);
      if (!has_annotator(r.annotator) || r.item_index >= items_.size())
        throw ParseError(cfg_.ratings_log.string(), line, "rating does not belong to this session");
      upsert(r);
      ++n;
    });
    return n;
  }

  std::vector<LikertRating> ratings() const {
    std::vector<LikertRating> out;
    for (const auto& [_, r] : ratings_) out.push_back(r);
    return out;
  }

  // Server-side record of every permutation (admin only).
  nlohmann::json assignment_record() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& a : cfg_.annotators) {
      const auto& q = queue(a);
      nlohmann::json slots = nlohmann::json::object();
      for (auto idx : q.order) {
        std::vector<std::string> names;
        for (auto c : q.slots.at(idx)) names.push_back(items_[idx].candidates[c].system);
        slots[std::to_string(idx)] = names;
      }
      j[a] = {{"order", q.order}, {"slots", slots}};
    }
    return j;
  }

 private:
  struct Queue {
    std::vector<std::size_t> order;
    std::map<std::size_t, std::vector<std::size_t>> slots;
  };
  using Key = std::tuple<std::string, std::size_t, std::string>;

  void build() {
    if (cfg_.systems.empty()) throw InputError("session needs at least one system");
    if (cfg_.annotators.empty()) throw InputError("session needs at least one annotator");
    std::map<std::string, int> seen;
    for (const auto& a : cfg_.annotators)
      if (seen[a]++) throw InputError("duplicate annotator id '" + a + "'");
    seen.clear();
    const auto count = cfg_.systems.front().items.size();
    for (const auto& s : cfg_.systems) {
      if (seen[s.system]++) throw InputError("duplicate system id '" + s.system + "'");
      if (s.items.size() != count)
        throw InputError("system '" + s.system + "' has " + std::to_string(s.items.size()) + " items, '" + cfg_.systems.front().system + "' has " +
                         std::to_string(count));
    }
    const std::size_t n = cfg_.sample_count == 0 ? count : cfg_.sample_count;
    if (n == 0 || n > count) throw InputError("sample_count " + std::to_string(n) + " outside 1.." + std::to_string(count));
    // The first items are the calibration set; at least one item always
    // remains for the main study.
    const std::size_t n_cal = std::min(kCalibrationItems, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      EvaluationItem item{i, cfg_.systems.front().items[i].first, {}, i < n_cal};
      for (const auto& s : cfg_.systems) item.candidates.push_back({s.system, s.items[i].second});
      items_.push_back(std::move(item));
    }
    for (const auto& a : cfg_.annotators) {
      Queue q;
      Rng rng(mix_seed(cfg_.seed, "order/" + a));
      std::vector<std::size_t> cal, main;
      for (std::size_t i = 0; i < n; ++i) (i < n_cal ? cal : main).push_back(i);
      rng.shuffle(cal.begin(), cal.end());
      rng.shuffle(main.begin(), main.end());
      q.order = cal;
      q.order.insert(q.order.end(), main.begin(), main.end());
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> perm(cfg_.systems.size());
        for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
        Rng slot_rng(mix_seed(cfg_.seed, "slots/" + a + "/" + std::to_string(i)));
        slot_rng.shuffle(perm.begin(), perm.end());
        q.slots[i] = std::move(perm);
      }
      queues_[a] = std::move(q);
    }
  }

  const Queue& queue(const std::string& annotator) const {
    auto it = queues_.find(annotator);
    if (it == queues_.end()) throw InputError("unknown annotator '" + annotator + "'");
    return it->second;
  }

  std::ofstream append_log() const {
    if (cfg_.ratings_log.has_parent_path()) std::filesystem::create_directories(cfg_.ratings_log.parent_path());
    std::ofstream out(cfg_.ratings_log, std::ios::app);
    if (!out) throw Error("cannot open ratings log " + cfg_.ratings_log.string());
    return out;
  }

  void upsert(const LikertRating& r) { ratings_[Key{r.annotator, r.item_index, r.system}] = r; }

  SessionConfig cfg_;
  std::vector<EvaluationItem> items_;
  std::map<std::string, Queue> queues_;
  std::map<Key, LikertRating> ratings_;
};

}  // namespace prism::humaneval
