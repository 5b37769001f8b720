#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "prism/corpus/sequences.hpp"

namespace prism::corpus {

// MovieLens-1M ships Latin-1 text; the rest of the pipeline expects UTF-8.
inline std::string latin1_to_utf8(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (c < 0x80) {
      out += static_cast<char>(c);
    } else {
      out += static_cast<char>(0xC0 | (c >> 6));
      out += static_cast<char>(0x80 | (c & 0x3F));
    }
  }
  return out;
}

struct MovieLensData {
  Catalog catalog;
  std::vector<Interaction> interactions;
};

// Reads movies.dat ("id::title::genre|genre") and ratings.dat
// ("user::movie::rating::timestamp") from a MovieLens-1M directory. Ratings
// are dropped; only the interaction event is kept.
inline MovieLensData load_movielens_1m(const std::filesystem::path& dir) {
  MovieLensData data;
  {
    auto path = dir / "movies.dat";
    auto in = jsonl::open_in(path);
    jsonl::for_each_line(in, [&](std::size_t n, const std::string& raw) {
      auto f = text::split(raw, "::");
      if (f.size() != 3) throw ParseError(path.string(), n, "expected id::title::genres");
      ItemRecord item{f[0], latin1_to_utf8(f[1]), {}};
      item.attributes.emplace_back("genre", text::join(text::split(f[2], "|"), ", "));
      data.catalog.add(std::move(item));
    });
  }
  {
    auto path = dir / "ratings.dat";
    auto in = jsonl::open_in(path);
    jsonl::for_each_line(in, [&](std::size_t n, const std::string& raw) {
      auto f = text::split(raw, "::");
      if (f.size() != 4) throw ParseError(path.string(), n, "expected user::movie::rating::timestamp");
      try {
        data.interactions.push_back({f[0], f[1], std::stoll(f[3])});
      } catch (const std::exception&) {
        throw ParseError(path.string(), n, "bad timestamp");
      }
    });
  }
  return data;
}

}  // namespace prism::corpus
