#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prism/corpus/sequences.hpp"

namespace prism::distill {

inline constexpr std::string_view kHistoryPlaceholder = "{history}";
inline constexpr std::string_view kItemPlaceholder = "{item_to_explain}";

// The faithfulness-constrained instruction given to the teacher.
inline constexpr std::string_view kDefaultTemplate =
    "Generate a short, personalized, and persuasive explanation for the following recommendation.\n"
    "Context:\n"
    "- User's movie viewing history: {history}\n"
    "- Recommended movie: {item_to_explain}\n"
    "Task: Explain WHY this is a good recommendation based on the user's history.\n"
    "- Be specific: Link features of the recommended movie (e.g., genre, director, actors, theme) to patterns in the history.\n"
    "- Be natural: Sound like a genuine recommendation from a friend.\n"
    "- Be concise: Ideally one or two sentences.\n"
    "- Start the explanation directly.\n"
    "Explanation:";

inline constexpr std::string_view kHistorySeparator = ", ";

class PromptTemplate {
 public:
  struct Fields {
    std::string history;
    std::string item;
  };

  PromptTemplate() : PromptTemplate(std::string(kDefaultTemplate)) {}

  explicit PromptTemplate(std::string text) : text_(std::move(text)) {
    auto count = [&](std::string_view needle) {
      std::size_t n = 0;
      for (auto pos = text_.find(needle); pos != std::string::npos; pos = text_.find(needle, pos + needle.size())) ++n;
      return n;
    };
    for (auto ph : {kHistoryPlaceholder, kItemPlaceholder}) {
      auto n = count(ph);
      if (n != 1)
        throw InputError("prompt template must contain " + std::string(ph) + " exactly once (found " + std::to_string(n) + ")");
    }
    auto h = text_.find(kHistoryPlaceholder);
    auto i = text_.find(kItemPlaceholder);
    history_first_ = h < i;
    auto first = history_first_ ? h : i;
    auto first_len = (history_first_ ? kHistoryPlaceholder : kItemPlaceholder).size();
    auto second = history_first_ ? i : h;
    auto second_len = (history_first_ ? kItemPlaceholder : kHistoryPlaceholder).size();
    head_ = text_.substr(0, first);
    middle_ = text_.substr(first + first_len, second - first - first_len);
    tail_ = text_.substr(second + second_len);
    if (middle_.empty()) throw InputError("prompt template placeholders must be separated by literal text");
  }

  // Whole file is the template; one trailing newline is dropped.
  static PromptTemplate from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open template file: " + path.string());
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!body.empty() && body.back() == '\n') body.pop_back();
    return PromptTemplate(std::move(body));
  }

  const std::string& text() const { return text_; }

  std::string render(std::string_view history, std::string_view item) const {
    std::string out = head_;
    out += history_first_ ? history : item;
    out += middle_;
    out += history_first_ ? item : history;
    out += tail_;
    return out;
  }

  std::string render(const std::vector<std::string>& history_titles, std::string_view item_title) const {
    return render(text::join(history_titles, kHistorySeparator), item_title);
  }

  // Recovers the substituted fields from a rendered prompt. Assumes the
  // middle literal does not occur inside the first substituted field.
  std::optional<Fields> extract(std::string_view prompt) const {
    if (prompt.size() < head_.size() + middle_.size() + tail_.size()) return std::nullopt;
    if (prompt.substr(0, head_.size()) != head_) return std::nullopt;
    if (prompt.substr(prompt.size() - tail_.size()) != tail_) return std::nullopt;
    auto body = prompt.substr(head_.size(), prompt.size() - head_.size() - tail_.size());
    auto mid = body.find(middle_);
    if (mid == std::string_view::npos) return std::nullopt;
    std::string first(body.substr(0, mid));
    std::string second(body.substr(mid + middle_.size()));
    if (history_first_) return Fields{std::move(first), std::move(second)};
    return Fields{std::move(second), std::move(first)};
  }

 private:
  std::string text_;
  std::string head_, middle_, tail_;
  bool history_first_ = true;
};

inline std::vector<std::string> history_titles(const corpus::InteractionHistory& history, const corpus::Catalog& catalog) {
  std::vector<std::string> titles;
  titles.reserve(history.items.size());
  for (const auto& id : history.items) titles.push_back(catalog.at(id).title);
  return titles;
}

// History rendered as comma-separated titles, oldest first.
inline std::string render_prompt(const PromptTemplate& tmpl, const corpus::RecommendationInstance& inst, const corpus::Catalog& catalog) {
  return tmpl.render(history_titles(inst.history, catalog), catalog.at(inst.recommended_item).title);
}

// Splits a rendered history back into titles, re-joining fragments of titles
// that themselves contain the separator when a catalog is available.
inline std::vector<std::string> split_history(std::string_view history, const corpus::Catalog* catalog = nullptr) {
  std::vector<std::string> titles;
  if (text::trim(history).empty()) return titles;
  auto parts = text::split(history, kHistorySeparator);
  if (!catalog) return parts;
  std::string pending;
  for (auto& p : parts) {
    pending = pending.empty() ? p : pending + std::string(kHistorySeparator) + p;
    if (catalog->find_by_title(pending)) {
      titles.push_back(std::move(pending));
      pending.clear();
    }
  }
  if (!pending.empty())
    for (auto& rest : text::split(pending, kHistorySeparator)) titles.push_back(std::move(rest));
  return titles;
}

}  // namespace prism::distill
