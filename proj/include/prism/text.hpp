#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace prism::text {

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = ascii_lower(c);
  return out;
}

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Letters, digits and every non-ASCII byte (UTF-8 continuation and lead
// bytes) count as word characters.
inline bool is_word_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, std::string_view sep) {
  std::vector<std::string> out;
  if (sep.empty()) {
    out.emplace_back(s);
    return out;
  }
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(s.substr(pos));
      break;
    }
    out.emplace_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

template <typename Range>
std::string join(const Range& parts, std::string_view sep) {
  std::string out;
  bool first = true;
  for (const auto& p : parts) {
    if (!first) out += sep;
    out += p;
    first = false;
  }
  return out;
}

// Model tokenizer: lowercase; a word is a run of word characters with
// optional internal apostrophes ("user's"); any other non-space character
// is a token on its own.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    char c = s[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      std::string word;
      while (i < n) {
        if (is_word_char(s[i])) {
          word += ascii_lower(s[i]);
          ++i;
        } else if (s[i] == '\'' && i + 1 < n && is_word_char(s[i + 1]) && !word.empty()) {
          word += '\'';
          ++i;
        } else {
          break;
        }
      }
      out.push_back(std::move(word));
      continue;
    }
    out.emplace_back(1, c);
    ++i;
  }
  return out;
}

// Inverse of tokenize up to case and spacing: closing punctuation attaches
// to the previous token and hyphens join their neighbours ("sci-fi").
inline std::string detokenize(const std::vector<std::string>& tokens) {
  static constexpr std::string_view kAttachLeft = ".,!?;:)]}%";
  std::string out;
  bool glue_next = false;
  for (const auto& t : tokens) {
    bool attach = t == "-" || (t.size() == 1 && kAttachLeft.find(t[0]) != std::string_view::npos);
    if (!out.empty() && !attach && !glue_next) out += ' ';
    out += t;
    glue_next = t == "(" || t == "[" || t == "{" || t == "-";
  }
  return out;
}

// Tokenization used by the overlap and embedding metrics: lowercase, ASCII
// punctuation deleted, split on whitespace. No stemming, no stopwords.
inline std::vector<std::string> overlap_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_space(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (is_word_char(c)) {
      cur += ascii_lower(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline constexpr std::string_view kOverlapTokenization =
    "lowercase; ASCII punctuation deleted; whitespace split; no stemming; no stopword removal";

}  // namespace prism::text
