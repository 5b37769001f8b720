#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prism/jsonl.hpp"

namespace prism::corpus {

struct ItemRecord {
  std::string item_id;
  std::string title;
  // (key, value) facts such as genre or year, in catalog-file order.
  std::vector<std::pair<std::string, std::string>> attributes;

  std::optional<std::string> attribute(std::string_view key) const {
    for (const auto& [k, v] : attributes)
      if (k == key) return v;
    return std::nullopt;
  }
};

// Items keyed by id, iterated in insertion order.
class Catalog {
 public:
  void add(ItemRecord item) {
    if (item.item_id.empty()) throw InputError("catalog item with empty item_id");
    if (text::trim(item.title).empty()) throw InputError("catalog item '" + item.item_id + "' has an empty title");
    auto [it, inserted] = index_.emplace(item.item_id, items_.size());
    if (!inserted) throw InputError("duplicate item_id '" + item.item_id + "' in catalog");
    by_title_.emplace(item.title, items_.size());
    items_.push_back(std::move(item));
  }

  const ItemRecord* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  const ItemRecord& at(std::string_view id) const {
    if (auto* item = find(id)) return *item;
    throw InputError("unknown item_id '" + std::string(id) + "'");
  }

  // First item carrying this exact title.
  const ItemRecord* find_by_title(std::string_view title) const {
    auto it = by_title_.find(std::string(title));
    return it == by_title_.end() ? nullptr : &items_[it->second];
  }

  bool contains(std::string_view id) const { return find(id) != nullptr; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<ItemRecord>& items() const { return items_; }

 private:
  std::vector<ItemRecord> items_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::size_t> by_title_;
};

inline jsonl::json to_json(const ItemRecord& item) {
  jsonl::json attrs = jsonl::json::object();
  for (const auto& [k, v] : item.attributes) attrs[k] = v;
  return {{"item_id", item.item_id}, {"title", item.title}, {"attributes", attrs}};
}

inline ItemRecord item_from_json(const jsonl::json& j, const std::string& source, std::size_t line) {
  if (!j.is_object()) throw ParseError(source, line, "catalog record must be a JSON object");
  ItemRecord item;
  item.item_id = jsonl::require_string(j, "item_id", source, line);
  item.title = jsonl::require_string(j, "title", source, line);
  if (auto it = j.find("attributes"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ParseError(source, line, "'attributes' must be an object");
    for (const auto& [k, v] : it->items())
      item.attributes.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
  }
  return item;
}

inline Catalog read_catalog(std::istream& in, const std::string& source = "<catalog>") {
  Catalog catalog;
  jsonl::for_each_line(in, [&](std::size_t n, const std::string& line) {
    auto item = item_from_json(jsonl::parse_line(source, n, line), source, n);
    try {
      catalog.add(std::move(item));
    } catch (const InputError& e) {
      throw ParseError(source, n, e.what());
    }
  });
  return catalog;
}

inline Catalog read_catalog(const std::filesystem::path& path) {
  auto in = jsonl::open_in(path);
  return read_catalog(in, path.string());
}

inline void write_catalog(const std::filesystem::path& path, const Catalog& catalog) {
  jsonl::write_all(path, catalog.items(), [](const ItemRecord& i) { return to_json(i); });
}

}  // namespace prism::corpus
