#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "prism/distill/prompt.hpp"
#include "prism/distill/teacher.hpp"

namespace prism::distill {

// Deterministic stand-in for a large instruction-following teacher. Output is
// a pure function of (seed, prompt): it names a history title, the
// recommended item's genre and year, and the user's dominant genres over the
// whole history. With probability `hallucination_rate` (decided per prompt)
// the history title is swapped for a catalog title that does not occur in
// the prompt.
class MockTeacher : public Teacher {
 public:
  MockTeacher(std::uint64_t seed, std::shared_ptr<const corpus::Catalog> catalog, PromptTemplate tmpl = {},
              double hallucination_rate = 0.0)
      : seed_(seed), catalog_(std::move(catalog)), template_(std::move(tmpl)), hallucination_rate_(hallucination_rate) {
    if (!catalog_) throw InputError("mock teacher needs a catalog");
    if (hallucination_rate_ < 0.0 || hallucination_rate_ > 1.0) throw InputError("hallucination rate must lie in [0, 1]");
  }

  std::string name() const override { return "mock"; }

  TeacherResponse complete(const std::string& prompt) const override {
    TeacherResponse resp;
    resp.outcome = generate(prompt);
    return resp;
  }

  std::string generate(const std::string& prompt) const {
    std::vector<std::string> history;
    std::string item;
    if (auto fields = template_.extract(prompt)) {
      history = split_history(fields->history, catalog_.get());
      item = text::trim(fields->item);
    } else {
      item = "this movie";
    }
    const auto prompt_hash = fnv1a64(prompt, splitmix64(seed_));
    const bool hallucinate = unit_interval(splitmix64(prompt_hash ^ 0x68616c6cULL)) < hallucination_rate_;

    std::string genre = "feature";
    std::string year;
    if (const auto* rec = catalog_->find_by_title(item)) {
      if (auto g = rec->attribute("genre")) genre = first_genre(*g);
      if (auto y = rec->attribute("year")) year = *y;
    }
    std::string when = year.empty() ? "" : " from " + year;
    std::string anchor = anchor_title(history, genre);
    if (hallucinate) anchor = off_prompt_title(prompt, prompt_hash);

    if (anchor.empty()) return item + " is a " + genre + " film" + when + " that makes a good first pick.";
    if (history.empty()) return "Fans of " + anchor + " will enjoy " + item + ", a " + genre + " film" + when + ".";

    // Phrasing follows the user's taste rather than the item, so two users
    // shown the same recommendation get differently worded explanations.
    const std::string taste = taste_phrase(history);
    switch (mix_seed(seed_, taste) % 3) {
      case 0:
        return "Since you enjoyed " + anchor + ", " + item + " is a " + genre + " film" + when + " that fits your love of " +
               taste + " movies.";
      case 1:
        return item + " is a " + genre + " pick" + when + "; like " + anchor + ", it suits your taste for " + taste + " films.";
      default:
        return "You keep coming back to " + taste + " films, and " + item + ", a " + genre + " movie" + when +
               " in the spirit of " + anchor + ", is a natural next watch.";
    }
  }

 private:
  static std::string first_genre(const std::string& genres) { return text::trim(text::split(genres, ",").front()); }

  std::string genre_of(const std::string& title) const {
    if (const auto* item = catalog_->find_by_title(title))
      if (auto g = item->attribute("genre")) return first_genre(*g);
    return {};
  }

  // Most recent history title sharing the recommended genre, else the most
  // recent title.
  std::string anchor_title(const std::vector<std::string>& history, const std::string& genre) const {
    for (auto it = history.rbegin(); it != history.rend(); ++it)
      if (genre_of(*it) == genre) return *it;
    return history.empty() ? std::string{} : history.back();
  }

  // Top genre over the history, plus the runner-up when it covers at least
  // 30% of the history.
  std::string taste_phrase(const std::vector<std::string>& history) const {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : history)
      if (auto g = genre_of(t); !g.empty()) ++counts[g];
    if (counts.empty()) return "similar";
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::string phrase = ranked[0].first;
    if (ranked.size() > 1 && 10 * ranked[1].second >= 3 * history.size()) phrase += " and " + ranked[1].first;
    return phrase;
  }

  std::string off_prompt_title(const std::string& prompt, std::uint64_t h) const {
    const auto& items = catalog_->items();
    if (items.empty()) return {};
    auto start = static_cast<std::size_t>(splitmix64(h) % items.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
      const auto& title = items[(start + k) % items.size()].title;
      if (prompt.find(title) == std::string::npos) return title;
    }
    return {};
  }

  std::uint64_t seed_;
  std::shared_ptr<const corpus::Catalog> catalog_;
  PromptTemplate template_;
  double hallucination_rate_;
};

// Titles from the catalog that occur in `text`.
inline std::vector<std::string> mentioned_titles(std::string_view text, const corpus::Catalog& catalog) {
  std::vector<std::string> found;
  for (const auto& item : catalog.items())
    if (text.find(item.title) != std::string_view::npos) found.push_back(item.title);
  return found;
}

// An explanation is grounded when every catalog title it mentions also
// occurs in its prompt.
inline bool is_grounded(std::string_view explanation, std::string_view prompt, const corpus::Catalog& catalog) {
  for (const auto& t : mentioned_titles(explanation, catalog))
    if (prompt.find(t) == std::string_view::npos) return false;
  return true;
}

}  // namespace prism::distill
