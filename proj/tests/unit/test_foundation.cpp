#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "prism/common.hpp"
#include "prism/jsonl.hpp"
#include "prism/stats.hpp"
#include "prism/text.hpp"
#include "support/temp_dir.hpp"

using namespace prism;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  std::vector<std::uint64_t> xa, xb, xc;
  for (int i = 0; i < 100; ++i) {
    xa.push_back(a.next());
    xb.push_back(b.next());
    xc.push_back(c.next());
  }
  EXPECT_EQ(xa, xb);
  EXPECT_NE(xa, xc);
}

TEST(Rng, PinnedFirstOutputs) {
  // splitmix64 reference values for seed 0.
  Rng r(0);
  EXPECT_EQ(r.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(r.next(), 0x6E789E6AA1B965F4ULL);
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Rng r(7);
  std::vector<int> hits(6, 0);
  for (int i = 0; i < 6000; ++i) {
    auto x = r.below(6);
    ASSERT_LT(x, 6u);
    ++hits[x];
  }
  for (int h : hits) EXPECT_GT(h, 800);
  EXPECT_EQ(r.below(0), 0u);
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(9);
  double sum = 0;
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 10000, 0.5, 0.02);
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  std::vector<double> v;
  for (int i = 0; i < 20000; ++i) v.push_back(r.normal(1.0, 2.0));
  EXPECT_NEAR(stats::mean(v), 1.0, 0.05);
  EXPECT_NEAR(stats::sample_std(v), 2.0, 0.05);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(5);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  r.shuffle(w.begin(), w.end());
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Hashing, MixSeedSeparatesSalts) {
  EXPECT_NE(mix_seed(1, "a"), mix_seed(1, "b"));
  EXPECT_NE(mix_seed(1, "a"), mix_seed(2, "a"));
  EXPECT_EQ(mix_seed(1, "a"), mix_seed(1, "a"));
  // FNV-1a 64 of "a" from the standard offset basis.
  EXPECT_EQ(fnv1a64("a"), 0xAF63DC4C8601EC8CULL);
}

TEST(Text, TokenizeLowercasesAndSplitsPunctuation) {
  auto t = text::tokenize("Since you enjoyed E.T., it's sci-fi!");
  std::vector<std::string> want = {"since", "you", "enjoyed", "e", ".", "t", ".", ",", "it's", "sci", "-", "fi", "!"};
  EXPECT_EQ(t, want);
}

TEST(Text, DetokenizeAttachesPunctuationAndHyphens) {
  EXPECT_EQ(text::detokenize({"a", "sci", "-", "fi", "film", ",", "really", "."}), "a sci-fi film, really.");
  EXPECT_EQ(text::detokenize({"see", "(", "this", ")"}), "see (this)");
  EXPECT_EQ(text::detokenize({}), "");
}

TEST(Text, OverlapTokensDeletePunctuation) {
  auto t = text::overlap_tokens("Back to the Future is a sci-fi movie, influenced by \"The Phantom Menace\".");
  std::vector<std::string> want = {"back", "to", "the", "future", "is", "a", "scifi", "movie", "influenced", "by", "the", "phantom", "menace"};
  EXPECT_EQ(t, want);
  EXPECT_EQ(text::overlap_tokens("  A   b\tC "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(text::overlap_tokens("... !!").empty());
}

TEST(Text, SplitTrimJoin) {
  EXPECT_EQ(text::split("a::b::", "::"), (std::vector<std::string>{"a", "b", ""}));
  EXPECT_EQ(text::trim("  x y \n"), "x y");
  std::vector<std::string> parts = {"x", "y", "z"};
  EXPECT_EQ(text::join(parts, ", "), "x, y, z");
}

TEST(Stats, MeanMedianStd) {
  std::vector<double> v = {3, 5};
  EXPECT_DOUBLE_EQ(stats::mean(v), 4.0);
  EXPECT_DOUBLE_EQ(stats::sample_std(v), std::sqrt(2.0));
  std::vector<double> w = {5, 1, 3, 2};
  EXPECT_DOUBLE_EQ(stats::median(w), 2.5);
  std::vector<double> one = {7};
  EXPECT_DOUBLE_EQ(stats::sample_std(one), 0.0);
  EXPECT_DOUBLE_EQ(stats::mean(std::vector<double>{}), 0.0);
}

TEST(Stats, NearestRankPercentile) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  EXPECT_DOUBLE_EQ(stats::percentile(v, 0.50), 50);
  EXPECT_DOUBLE_EQ(stats::percentile(v, 0.95), 95);
  EXPECT_DOUBLE_EQ(stats::percentile(v, 0.0), 1);
  EXPECT_DOUBLE_EQ(stats::percentile(v, 1.0), 100);
}

TEST(Jsonl, SkipsBlankLinesAndNumbersFromOne) {
  std::istringstream in("{\"a\":1}\n\n  \r\n{\"a\":2}\r\n");
  std::vector<std::size_t> lines;
  std::vector<int> values;
  jsonl::for_each_line(in, [&](std::size_t n, const std::string& l) {
    lines.push_back(n);
    values.push_back(jsonl::parse_line("mem", n, l)["a"].get<int>());
  });
  EXPECT_EQ(lines, (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(values, (std::vector<int>{1, 2}));
}

TEST(Jsonl, ParseErrorNamesSourceAndLine) {
  try {
    jsonl::parse_line("data.jsonl", 7, "{nope");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("data.jsonl"), std::string::npos);
    EXPECT_NE(what.find("7"), std::string::npos);
  }
}

TEST(Jsonl, MissingFileIsInputError) {
  EXPECT_THROW(jsonl::open_in("/nonexistent/x.jsonl"), InputError);
}

TEST(Jsonl, WriteJsonRoundTrips) {
  testutil::TempDir dir;
  jsonl::json v = {{"k", {1, 2, 3}}, {"s", "x"}};
  jsonl::write_json(dir / "a" / "b.json", v);
  EXPECT_EQ(jsonl::read_json(dir / "a" / "b.json"), v);
}
