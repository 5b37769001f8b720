#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/corpus/catalog.hpp"
#include "prism/corpus/sequences.hpp"

namespace prism::pipeline {

// Genre-structured synthetic movie corpus. Each user prefers one or two
// latent genres; most interactions come from those genres, the rest are
// drawn uniformly. Optionally every history ends with the same block of
// `shared_tail` trending titles: once a model's input window holds only
// that block, users with different tastes present identical inputs, and
// only a per-user vector can tell them apart.
struct SyntheticConfig {
  std::size_t users = 40;
  std::size_t genres = 6;
  std::size_t items_per_genre = 16;
  std::size_t min_history = 20;
  std::size_t max_history = 40;
  // Share of interactions outside the user's genres.
  double off_genre_rate = 0.3;
  std::size_t shared_tail = 0;
  std::uint64_t seed = 7;

  void validate() const {
    if (users < 1 || genres < 2 || items_per_genre < 1) throw InputError("synthetic corpus needs users >= 1, genres >= 2, items_per_genre >= 1");
    if (min_history < 2 || max_history < min_history) throw InputError("synthetic corpus needs 2 <= min_history <= max_history");
    if (max_history + shared_tail > genres * items_per_genre) throw InputError("max_history + shared_tail exceeds the catalog size");
    if (!(off_genre_rate >= 0.0 && off_genre_rate <= 1.0)) throw InputError("off_genre_rate must lie in [0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = {{"users", c.users}, {"genres", c.genres}, {"items_per_genre", c.items_per_genre}, {"min_history", c.min_history},
       {"max_history", c.max_history}, {"off_genre_rate", c.off_genre_rate}, {"shared_tail", c.shared_tail}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  c.users = j.value("users", c.users);
  c.genres = j.value("genres", c.genres);
  c.items_per_genre = j.value("items_per_genre", c.items_per_genre);
  c.min_history = j.value("min_history", c.min_history);
  c.max_history = j.value("max_history", c.max_history);
  c.off_genre_rate = j.value("off_genre_rate", c.off_genre_rate);
  c.shared_tail = j.value("shared_tail", c.shared_tail);
  c.seed = j.value("seed", c.seed);
}

struct SyntheticCorpus {
  corpus::Catalog catalog;
  std::vector<corpus::InteractionHistory> histories;
  std::map<std::string, std::vector<std::string>> user_genres;
  std::vector<std::string> shared_tail;  // item ids, oldest first
};

inline const std::vector<std::string>& genre_names() {
  static const std::vector<std::string> g = {"comedy", "drama",    "horror",  "western", "sci-fi",      "romance",
                                             "thriller", "animation", "musical", "fantasy", "documentary", "noir"};
  return g;
}

inline SyntheticCorpus generate_corpus(const SyntheticConfig& cfg) {
  cfg.validate();
  if (cfg.genres > genre_names().size()) throw InputError("at most " + std::to_string(genre_names().size()) + " genres");
  static const std::vector<std::string> first = {"Silent", "Crimson", "Golden", "Hidden", "Broken", "Distant", "Electric", "Frozen",
                                                 "Wild",   "Hollow",  "Burning", "Lonely", "Midnight", "Iron",   "Paper",    "Velvet",
                                                 "Savage", "Quiet",   "Last",    "Bright"};
  static const std::vector<std::string> second = {"Harbor", "Empire", "Garden", "Signal", "Frontier", "Mirror", "Orchard", "Voyage",
                                                  "Circus", "Canyon", "Letter", "Engine", "Lantern",  "Island", "Kingdom", "Parade",
                                                  "Storm",  "Bridge", "Carnival", "Tide"};
  SyntheticCorpus out;
  Rng rng(mix_seed(cfg.seed, "synthetic"));
  // Distinct two-word titles, drawn without replacement.
  std::vector<std::size_t> combos(first.size() * second.size());
  for (std::size_t i = 0; i < combos.size(); ++i) combos[i] = i;
  rng.shuffle(combos.begin(), combos.end());
  const std::size_t n_items = cfg.genres * cfg.items_per_genre;
  if (n_items > combos.size()) throw InputError("synthetic catalog limited to " + std::to_string(combos.size()) + " items");
  for (std::size_t i = 0; i < n_items; ++i) {
    const std::size_t g = i % cfg.genres;
    corpus::ItemRecord rec;
    rec.item_id = "m" + std::to_string(i + 1);
    rec.title = first[combos[i] / second.size()] + " " + second[combos[i] % second.size()];
    rec.attributes = {{"genre", genre_names()[g]}, {"year", std::to_string(1960 + rng.below(60))}};
    out.catalog.add(std::move(rec));
  }

  std::vector<std::size_t> tail_idx(n_items);
  for (std::size_t i = 0; i < n_items; ++i) tail_idx[i] = i;
  rng.shuffle(tail_idx.begin(), tail_idx.end());
  tail_idx.resize(cfg.shared_tail);
  std::vector<char> in_tail(n_items, 0);
  for (auto i : tail_idx) {
    in_tail[i] = 1;
    out.shared_tail.push_back(out.catalog.items()[i].item_id);
  }

  for (std::size_t u = 0; u < cfg.users; ++u) {
    corpus::InteractionHistory h;
    h.user_id = "u" + std::to_string(u + 1);
    std::vector<std::size_t> liked = {static_cast<std::size_t>(rng.below(cfg.genres))};
    if (rng.uniform() < 0.5) {
      auto g2 = static_cast<std::size_t>(rng.below(cfg.genres - 1));
      liked.push_back(g2 >= liked[0] ? g2 + 1 : g2);
    }
    for (auto g : liked) out.user_genres[h.user_id].push_back(genre_names()[g]);
    const auto len = cfg.min_history + static_cast<std::size_t>(rng.below(cfg.max_history - cfg.min_history + 1));
    std::vector<char> used(in_tail);
    std::int64_t ts = 946684800 + static_cast<std::int64_t>(rng.below(86400 * 365));
    while (h.items.size() < len) {
      std::size_t g;
      if (rng.uniform() < cfg.off_genre_rate) g = static_cast<std::size_t>(rng.below(cfg.genres));
      else g = liked.size() == 1 || rng.uniform() < 0.6 ? liked[0] : liked[1];
      // Item i of the catalog has genre i % genres, so pools index directly.
      std::vector<std::size_t> open;
      for (std::size_t k = 0; k < cfg.items_per_genre; ++k)
        if (!used[k * cfg.genres + g]) open.push_back(k * cfg.genres + g);
      if (open.empty()) {
        // genre exhausted: any unused item keeps long histories finite
        for (std::size_t k = 0; k < n_items; ++k)
          if (!used[k]) open.push_back(k);
      }
      const auto idx = open[static_cast<std::size_t>(rng.below(open.size()))];
      const auto& id = out.catalog.items()[idx].item_id;
      used[idx] = 1;
      h.items.push_back(id);
      ts += 3600 + static_cast<std::int64_t>(rng.below(86400 * 7));
      h.timestamps.push_back(ts);
    }
    for (const auto& id : out.shared_tail) {
      h.items.push_back(id);
      ts += 3600 + static_cast<std::int64_t>(rng.below(86400 * 7));
      h.timestamps.push_back(ts);
    }
    out.histories.push_back(corpus::truncate_history(std::move(h)));
  }
  return out;
}

}  // namespace prism::pipeline
