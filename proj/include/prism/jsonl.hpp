#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/common.hpp"
#include "prism/text.hpp"

namespace prism::jsonl {

using json = nlohmann::json;

// Calls fn(line_number, line) for every non-blank line; line numbers are 1-based.
inline void for_each_line(std::istream& in, const std::function<void(std::size_t, const std::string&)>& fn) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    fn(n, line);
  }
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

inline json parse_line(const std::string& source, std::size_t line_no, const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
  }
}

inline std::vector<json> read(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<json> out;
  for_each_line(in, [&](std::size_t n, const std::string& line) { out.push_back(parse_line(path.string(), n, line)); });
  return out;
}

inline void write(std::ostream& out, const json& value) { out << value.dump() << '\n'; }

template <typename Range, typename ToJson>
void write_all(const std::filesystem::path& path, const Range& items, ToJson to_json) {
  auto out = open_out(path);
  for (const auto& item : items) write(out, to_json(item));
}

inline void write_json(const std::filesystem::path& path, const json& value, int indent = 2) {
  auto out = open_out(path);
  out << value.dump(indent) << '\n';
}

inline json read_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": invalid JSON: " + e.what());
  }
}

// Reads a required string field, naming the field and line on failure.
inline std::string require_string(const json& obj, const char* key, const std::string& source, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(source, line, std::string("missing field '") + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(source, line, std::string("field '") + key + "' must be a string");
}

}  // namespace prism::jsonl
